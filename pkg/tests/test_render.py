import xml.etree.ElementTree as ET

import numpy as np

from quasiperc.dynamics import Configuration, fixpoint
from quasiperc.render import RenderStyle, render_svg

SVG = "{http://www.w3.org/2000/svg}"


def test_svg_is_well_formed_and_complete(penrose10):
    root = ET.fromstring(render_svg(penrose10, title="patch"))
    assert root.tag == SVG + "svg"
    assert len(root.findall(f".//{SVG}polygon")) == len(penrose10)


def test_svg_is_byte_stable(penrose10):
    x = (np.arange(len(penrose10)) % 7 == 0).astype(np.uint8)
    a = render_svg(penrose10, x, RenderStyle(fill="cluster"))
    b = render_svg(penrose10, x.copy(), RenderStyle(fill="cluster"))
    assert a == b


def test_state_colours_differ(grid8):
    x = np.zeros(len(grid8), dtype=np.uint8)
    empty = render_svg(grid8, x)
    x[grid8.central_node()] = 1
    assert render_svg(grid8, x) != empty
    out, _ = fixpoint(Configuration(grid8, x))
    ET.fromstring(render_svg(grid8, out.state, RenderStyle(fill="family", highlight=[0, 1])))


def test_generic_graph_renders(fortress_grid):
    ET.fromstring(render_svg(fortress_grid))
