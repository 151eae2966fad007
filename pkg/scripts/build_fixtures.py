"""Regenerate the shipped data files: fixture pack, its golden violations,
the semantic distance table and the reference campaign config.

    python3 scripts/build_fixtures.py
"""
from __future__ import annotations

import hashlib
import json
import tempfile
from pathlib import Path

from nodmt.campaign import RECORDS_FILE, config_from_dict, load_fixture_pack, run_campaign, run_case
from nodmt.filters import SemanticDistanceTable

DATA = Path(__file__).resolve().parents[1] / "src" / "nodmt" / "data"

MAPS = [
 ("u-trap-east", "u_trap", [
  "############",
  "#..........#",
  "#.######...#",
  "#......#...#",
  "#......#.P.#",
  "#......#...#",
  "#.######...#",
  "#..........#",
  "#..C.......#",
  "#..........#",
  "#......B...#",
  "############"], [("pillow",9,4),("chair",3,8),("bed",7,10)], "pillow", (3,4,90)),
 ("u-trap-north", "u_trap", [
  "############",
  "#....P.....#",
  "#..........#",
  "#.########.#",
  "#.#......#.#",
  "#.#......#.#",
  "#.#......#.#",
  "#.#......#.#",
  "#..........#",
  "#..T.......#",
  "#.........S#",
  "############"], [("plant",5,1),("toilet",3,9),("sofa",10,10)], "plant", (5,5,0)),
 ("circuit-ring", "circuitous", [
  "############",
  "#..........#",
  "#.########.#",
  "#.#......#.#",
  "#.#.####.#.#",
  "#.#.#..#.#.#",
  "#.#.#..#.#.#",
  "#.#.##.#.#.#",
  "#.#....#.#.#",
  "#.######.#.#",
  "#........#T#",
  "############"], [("television",10,10),("chair",5,5)], "chair", (1,10,0)),
 ("circuit-left-target", "circuitous", [
  "############",
  "#B.........#",
  "#..........#",
  "#...####...#",
  "#...#..#...#",
  "#...#..#...#",
  "#...#..#...#",
  "#...####...#",
  "#..........#",
  "#..........#",
  "#.........S#",
  "############"], [("basketball",1,1),("sofa",10,10)], "basketball", (6,9,90)),
 ("circuit-spiral", "circuitous", [
  "############",
  "#..........#",
  "#.######...#",
  "#.#......#.#",
  "#.#.####.#.#",
  "#.#.#P.#.#.#",
  "#.#.#..#.#.#",
  "#.#.#..#.#.#",
  "#.#....#.#.#",
  "#.########.#",
  "#..........#",
  "############"], [("pillow",5,5),("bed",10,10)], "pillow", (1,1,180)),
 ("obstacle-gap", "obstacle_trap", [
  "############",
  "#.....#....#",
  "#.....#....#",
  "#.....#..T.#",
  "#.....#....#",
  "#..........#",
  "#.....#....#",
  "#.....#....#",
  "#.....#..C.#",
  "#.....#....#",
  "#..........#",
  "############"], [("television",9,3),("chair",9,8)], "television", (2,3,90)),
 ("two-rooms", "rooms", [
  "############",
  "#....#.....#",
  "#....#.....#",
  "#....#..S..#",
  "#..........#",
  "#....#.....#",
  "######.#####",
  "#..........#",
  "#..P.......#",
  "#......#...#",
  "#......#.B.#",
  "############"], [("sofa",8,3),("pillow",3,8),("bed",9,10)], "bed", (2,2,180)),
 ("open-hall", "open", [
  "############",
  "#..........#",
  "#..........#",
  "#...T......#",
  "#..........#",
  "#..........#",
  "#..........#",
  "#......C...#",
  "#..........#",
  "#..........#",
  "#..........#",
  "############"], [("toilet",4,3),("chair",7,7)], "toilet", (9,9,90)),
 ("dead-end-comb", "u_trap", [
  "############",
  "#..........#",
  "#.#.#.#.#..#",
  "#.#.#.#.#..#",
  "#.#.#.#.#..#",
  "#.#.#.#.#..#",
  "#.#.#.#.#..#",
  "#.#.#.#.#..#",
  "#.#.#.#.#..#",
  "#........#B#",
  "#.P......#.#",
  "############"], [("basketball",10,9),("pillow",2,10)], "basketball", (7,7,180)),
 ("corridor-loop", "circuitous", [
  "############",
  "#....#.....#",
  "#.##.#.###.#",
  "#.#..#...#.#",
  "#.#.####.#.#",
  "#.#......#.#",
  "#.########.#",
  "#..........#",
  "####.#######",
  "#..........#",
  "#P........T#",
  "############"], [("plant",1,10),("television",10,10)], "plant", (4,3,0)),
 ("pillar-field", "obstacle_trap", [
  "############",
  "#..........#",
  "#.#..#..#..#",
  "#..........#",
  "#..#..#..#.#",
  "#..........#",
  "#.#..#..#..#",
  "#..........#",
  "#..#..#..#.#",
  "#..........#",
  "#...S....B.#",
  "############"], [("sofa",4,10),("bed",9,10)], "sofa", (9,1,270)),
 ("l-shaped", "rooms", [
  "############",
  "#....#######",
  "#....#######",
  "#....#######",
  "#....#######",
  "#..........#",
  "#..........#",
  "#####......#",
  "#####......#",
  "#####....T.#",
  "#####......#",
  "############"], [("toilet",9,9),("pillow",1,1)], "pillow", (8,6,180)),
]

# found by seeded search for frontier-greedy regressions (rows copied verbatim)
SEARCHED = [
 ("searched-27", "searched", [
  ".###.....#..",
  ".##......#..",
  ".....T.#....",
  ".#.........#",
  "...S#...B...",
  "..##....#...",
  "....###..##.",
  ".#.....#.##.",
  "..#........#",
  "...#...#....",
  "...T........",
  "....##..#..."], [("basketball",8,4),("toilet",5,2),("sofa",3,4),("toilet",3,10)], "sofa", (8,0,90)),
 ("searched-33", "searched", [
  "..####...#T.",
  "..##........",
  "..#.S.....#.",
  "............",
  ".#......#..#",
  ".....#......",
  ".....T.....#",
  "...#.T.....#",
  "..#.#.#...##",
  "#........###",
  ".........###",
  "###.#.##..##"], [("television",10,0),("toilet",5,6),("television",5,7),("sofa",4,2)], "toilet", (8,1,90)),
 ("searched-42", "searched", [
  ".....#......",
  "....#...#.##",
  "#...#...#P.#",
  "#.#.C.....##",
  ".....#..#.##",
  "...###.....#",
  "............",
  "#.....##..##",
  "............",
  ".......#..#B",
  "..#.T.#.....",
  "....#......."], [("chair",4,3),("television",4,10),("basketball",11,9),("pillow",9,2)], "basketball", (9,0,90)),
]

GOLDEN_CONFIG = {
    "seed": 2024,
    "N": 15,
    "suite": "fixtures",
    "planners": ["GREEDY_FRONTIER", "WALL_BIASED", "SCENE_SENSITIVE"],
}

REFERENCE_CONFIG = {
    "seed": 20240601,
    "N": 20,
    "planners": ["GREEDY_FRONTIER", "SCENE_SENSITIVE"],
    "output_dir": "runs/reference",
}


def fixture_json() -> dict:
    out = []
    for i, (name, kind, rows, objects, target, start) in enumerate(MAPS + SEARCHED):
        out.append(
            {
                "name": name,
                "kind": kind,
                "rows": rows,
                "objects": [{"id": j, "category": c, "x": x, "y": y} for j, (c, x, y) in enumerate(objects)],
                "target": target,
                "start": list(start),
                "seed": 1000 + i,
            }
        )
    return {"fixtures": out}


def golden(cfg) -> dict:
    cases = load_fixture_pack(cfg)
    entries = []
    for case in cases:
        records, skips = run_case(cfg, case)
        entries.append(
            {
                "source_id": case.source_id,
                "name": case.name,
                "oracle_cost": case.oracle_cost,
                "records": [
                    {k: r[k] for k in ("planner", "mr", "arm", "c_s", "c_f", "violated", "severity")} for r in records
                ],
                "skips": skips,
            }
        )
    return {"config": cfg.to_dict(), "cases": entries}


def reference_golden() -> dict:
    cfg = config_from_dict(REFERENCE_CONFIG)
    with tempfile.TemporaryDirectory() as tmp:
        report = run_campaign(cfg, out_dir=tmp)
        data = (Path(tmp) / RECORDS_FILE).read_bytes()
    return {
        "records_sha256": hashlib.sha256(data).hexdigest(),
        "n_records": report["n_records"],
        "first_record": json.loads(data.splitlines()[0]),
    }


def write(name: str, obj) -> None:
    (DATA / name).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    write("fixtures.json", fixture_json())
    table = SemanticDistanceTable.default()
    write("semantic_distance.json", json.loads(table.to_json()))
    write("reference_config.json", REFERENCE_CONFIG)
    write("fixture_golden.json", golden(config_from_dict(GOLDEN_CONFIG)))
    write("reference_golden.json", reference_golden())


if __name__ == "__main__":
    main()
