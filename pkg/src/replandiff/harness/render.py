"""SVG renders of one logged episode: a top-down maze view and a score curve."""

from __future__ import annotations

import csv
import os
import xml.etree.ElementTree as ET

import numpy as np

from ..envs.world import load_world

SCALE = 40.0  # pixels per world unit


class RenderError(ValueError):
    pass


def _n(x):
    return f"{float(x):.2f}"


def read_steps(path, variant=None, seed=None, episode=None):
    """Rows of one episode from a steps CSV; defaults to the first episode in the file."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise RenderError(f"{path} has no step rows")
    first = rows[0]
    key = (
        variant if variant is not None else first["variant"],
        str(seed) if seed is not None else first["seed"],
        str(episode) if episode is not None else first["episode"],
    )
    sel = [r for r in rows if (r["variant"], r["seed"], r["episode"]) == key]
    if not sel:
        raise RenderError(f"no rows for variant={key[0]} seed={key[1]} episode={key[2]}")
    return key, sel


def _svg(width, height):
    return ET.Element("svg", {"xmlns": "http://www.w3.org/2000/svg", "width": _n(width), "height": _n(height),
                              "viewBox": f"0 0 {_n(width)} {_n(height)}"})


def replan_rows(rows):
    return [r for r in rows if r["replan"] and r["replan"] != "initial"]


def maze_svg(world, rows, t_doors=None):
    """Walls, doors (state at ``t_doors``, default the last logged step), both trajectories and markers."""
    nr, nc = world.shape
    cs = world.cell_size * SCALE
    svg = _svg(nc * cs, nr * cs)
    ET.SubElement(svg, "rect", {"class": "floor", "x": "0", "y": "0", "width": _n(nc * cs), "height": _n(nr * cs),
                                "fill": "#ffffff"})
    t = int(rows[-1]["t"]) if t_doors is None else t_doors
    closed = world.closed_doors(t)
    walls = ET.SubElement(svg, "g", {"id": "walls"})
    for r, c in zip(*np.nonzero(world.walls)):
        ET.SubElement(walls, "rect", {"class": "wall", "x": _n(c * cs), "y": _n(r * cs), "width": _n(cs),
                                      "height": _n(cs), "fill": "#404040"})
    doors = ET.SubElement(svg, "g", {"id": "doors"})
    for cell, door_id in sorted(world.door_ids_by_cell.items()):
        r, c = cell
        shut = door_id in closed
        ET.SubElement(doors, "rect", {"class": "door closed" if shut else "door open", "x": _n(c * cs),
                                      "y": _n(r * cs), "width": _n(cs), "height": _n(cs),
                                      "fill": "#b03030" if shut else "#f0c0c0"})

    def pt(x, y):
        # world x runs along columns, y along rows
        return f"{_n(float(x) * SCALE)},{_n(float(y) * SCALE)}"

    planned = " ".join(pt(r["plan_x"], r["plan_y"]) for r in rows)
    executed = " ".join(pt(r["x"], r["y"]) for r in rows)
    ET.SubElement(svg, "polyline", {"class": "planned", "points": planned, "fill": "none", "stroke": "#3060c0",
                                    "stroke-width": "2", "stroke-dasharray": "4 3"})
    ET.SubElement(svg, "polyline", {"class": "executed", "points": executed, "fill": "none", "stroke": "#20a040",
                                    "stroke-width": "2"})
    gx, gy = world.cell_center(world.goal_cell)
    ET.SubElement(svg, "circle", {"class": "goal", "cx": _n(gx * SCALE), "cy": _n(gy * SCALE),
                                  "r": _n(world.goal_radius * SCALE), "fill": "none", "stroke": "#d0a000",
                                  "stroke-width": "2"})
    marks = ET.SubElement(svg, "g", {"id": "replans"})
    for r in replan_rows(rows):
        ET.SubElement(marks, "circle", {"class": f"replan {r['replan']}", "cx": _n(float(r["x"]) * SCALE),
                                        "cy": _n(float(r["y"]) * SCALE), "r": "4",
                                        "fill": "#c02020" if r["replan"] == "scratch" else "#e08020"})
    return svg


def score_svg(rows, theta_future, theta_scratch, width=600.0, height=240.0, pad=30.0):
    """Score against env step with threshold lines and replan markers."""
    svg = _svg(width, height)
    t_max = max(1, max(int(r["t"]) for r in rows))

    def xy(t, s):
        return pad + (width - 2 * pad) * t / t_max, height - pad - (height - 2 * pad) * s

    ET.SubElement(svg, "rect", {"class": "frame", "x": _n(pad), "y": _n(pad), "width": _n(width - 2 * pad),
                                "height": _n(height - 2 * pad), "fill": "none", "stroke": "#808080"})
    for name, th, color in (("theta-future", theta_future, "#e08020"), ("theta-scratch", theta_scratch, "#c02020")):
        x0, y0 = xy(0, th)
        x1, _ = xy(t_max, th)
        ET.SubElement(svg, "line", {"class": f"threshold {name}", "x1": _n(x0), "y1": _n(y0), "x2": _n(x1),
                                    "y2": _n(y0), "stroke": color, "stroke-dasharray": "5 4"})
    scored = [(int(r["t"]), float(r["score"])) for r in rows if r["score"] != ""]
    pts = " ".join(f"{_n(a)},{_n(b)}" for a, b in (xy(t, s) for t, s in scored))
    ET.SubElement(svg, "polyline", {"class": "score", "points": pts, "fill": "none", "stroke": "#3060c0",
                                    "stroke-width": "2"})
    marks = ET.SubElement(svg, "g", {"id": "decisions"})
    for r in replan_rows(rows):
        s = float(r["score"]) if r["score"] != "" else 0.0
        x, y = xy(int(r["t"]), s)
        ET.SubElement(marks, "circle", {"class": f"replan {r['replan']}", "cx": _n(x), "cy": _n(y), "r": "4",
                                        "fill": "#c02020" if r["replan"] == "scratch" else "#e08020"})
    return svg


def to_text(svg):
    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"


def cmd_render(steps_csv, world_path, out_dir, variant=None, seed=None, episode=None,
               theta_future=0.7, theta_scratch=0.5):
    world = load_world(world_path)
    key, rows = read_steps(steps_csv, variant, seed, episode)
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{key[0]}_s{key[1]}_e{key[2]}"
    paths = []
    for suffix, svg in (("maze", maze_svg(world, rows)), ("score", score_svg(rows, theta_future, theta_scratch))):
        p = os.path.join(out_dir, f"{stem}_{suffix}.svg")
        with open(p, "w") as f:
            f.write(to_text(svg))
        paths.append(p)
    print("\n".join(paths))
    return paths
