"""Scenario files for the Kempf-Ness sandbox.

A scenario is an INI file::

    [action]
    group = torus            ; or su2
    weights = 1 -1           ; torus rows separated by ';'
    # spins = 1/2, 1         ; su2 blocks

    [start balanced]
    x = 1, 1
    expect = polystable      ; optional
    budget = 500             ; optional

Every ``[start NAME]`` section is descended independently.  The result is a
list of JSON-ready verdict records in section order.
"""

from __future__ import annotations

import configparser
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from .actions import LinearAction, moment_map
from .descent import kempf_ness_descend

VERDICTS = ("polystable", "unstable", "budget")


class ScenarioError(ValueError):
    pass


def _parse_action(sec) -> LinearAction:
    group = sec.get("group", "").strip().lower()
    if group == "torus":
        if "weights" not in sec:
            raise ScenarioError("[action] torus needs 'weights'")
        try:
            rows = [[int(v) for v in r.replace(",", " ").split()] for r in sec["weights"].split(";") if r.strip()]
        except ValueError as exc:
            raise ScenarioError(f"[action] weights: {exc}") from None
        if len({len(r) for r in rows}) != 1:
            raise ScenarioError("[action] weights rows have different lengths")
        return LinearAction.torus(rows)
    if group == "su2":
        if "spins" not in sec:
            raise ScenarioError("[action] su2 needs 'spins'")
        try:
            spins = [Fraction(v.strip()) for v in sec["spins"].split(",") if v.strip()]
            return LinearAction.su2(spins)
        except ValueError as exc:
            raise ScenarioError(f"[action] spins: {exc}") from None
    raise ScenarioError(f"[action] group must be 'torus' or 'su2', got {group!r}")


def parse_point(text: str):
    try:
        return np.array([complex(v.strip().replace(" ", "")) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise ScenarioError(f"bad point {text!r}: {exc}") from None


def load_scenario(path_or_text):
    """Return ``(action, starts)`` with ``starts`` a list of dicts."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    p = Path(path_or_text) if not str(path_or_text).lstrip().startswith("[") else None
    try:
        if p is not None:
            if not p.exists():
                raise ScenarioError(f"scenario file {p} does not exist")
            cp.read(p)
        else:
            cp.read_string(str(path_or_text))
    except configparser.Error as exc:
        raise ScenarioError(f"scenario parse error: {exc}") from None
    if "action" not in cp:
        raise ScenarioError("scenario needs an [action] section")
    action = _parse_action(cp["action"])
    starts = []
    for name in cp.sections():
        if not name.startswith("start"):
            continue
        sec = cp[name]
        label = name[len("start"):].strip() or f"start{len(starts)}"
        if "x" not in sec:
            raise ScenarioError(f"[{name}] needs 'x'")
        x = parse_point(sec["x"])
        if x.size != action.dim:
            raise ScenarioError(f"[{name}] x has {x.size} entries, the action has dimension {action.dim}")
        expect = sec.get("expect")
        if expect is not None and expect not in VERDICTS:
            raise ScenarioError(f"[{name}] expect must be one of {VERDICTS}")
        try:
            budget = sec.getint("budget", 500)
        except ValueError:
            raise ScenarioError(f"[{name}] budget must be an integer") from None
        starts.append({"name": label, "x": x, "expect": expect, "budget": budget})
    if not starts:
        raise ScenarioError("scenario has no [start ...] sections")
    return action, starts


def run_scenario(action: LinearAction, starts, workers: int = 1) -> list:
    """Descend from every start; records come back in input order whatever ``workers`` is."""
    def one(st):
        res = kempf_ness_descend(action, st["x"], st["budget"])
        rec = {"name": st["name"], "start_moment": [float(v) for v in moment_map(action, st["x"])]}
        rec.update(res.record())
        rec["expected"] = st["expect"]
        rec["pass"] = bool(res.monotone and (st["expect"] is None or st["expect"] == res.verdict))
        return rec

    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as ex:
        return list(ex.map(one, starts))
