#!/usr/bin/env python3
"""From raw gaze samples to attention switches.

Simulates a 60 Hz recording over a rendered method: dwell on the
signature, jump to the loop, jump to the return. The I-VT classifier
finds the three fixations, the layout boxes anchor them to AST nodes,
and the switch extractor produces the directed edges."""

import numpy as np

from eyetrans.categories import CATEGORY_NAMES
from eyetrans.gaze import (classify_ivt, extract_switches, layout_tokens,
                           map_fixations, GazeSample)
from eyetrans.parser import parse_java_subset

SOURCE = """\
int sumTo(int n) {
    int s = 0;
    while (n > 0) {
        s = s + n;
        n = n - 1;
    }
    return s;
}
"""

CHAR_W, CHAR_H = 10.0, 20.0
boxes = layout_tokens(SOURCE, CHAR_W, CHAR_H)
print(f"{len(boxes)} token bounding boxes; first: {boxes[0]}")

ast = parse_java_subset(SOURCE)

def dwell(samples, x, y, t0, ms=250.0, hz=60.0):
    step = 1000.0 / hz
    t = t0
    while t < t0 + ms:
        samples.append(GazeSample(x, y, t))
        t += step
    return t

samples: list[GazeSample] = []
t = dwell(samples, 45.0, 10.0, 0.0)        # 'sumTo' in the signature
t = dwell(samples, 50.0, 50.0, t + 16.7)   # 'while' condition row
t = dwell(samples, 50.0, 110.0, t + 16.7)  # the return statement
print(f"simulated {len(samples)} samples over {t:.0f} ms")

fixations = map_fixations(classify_ivt(samples, threshold=400.0), boxes)
print(f"I-VT found {len(fixations)} fixations (400 px/100ms threshold):")
for fx in fixations:
    cat = CATEGORY_NAMES[ast.nodes[fx.node_id].category] if fx.node_id is not None else "-"
    print(f"  ({fx.x:5.1f},{fx.y:5.1f}) {fx.duration:5.1f} ms -> node "
          f"{fx.node_id} [{cat}]")

switches = extract_switches(fixations)
print("\nattention switches:")
for sw in switches:
    src_cat = CATEGORY_NAMES[ast.nodes[sw.src].category]
    dst_cat = CATEGORY_NAMES[ast.nodes[sw.dst].category]
    print(f"  s^{sw.ordinal}: node {sw.src} [{src_cat}] -> node {sw.dst} [{dst_cat}]")
