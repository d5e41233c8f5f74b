"""Comparison tables built from run manifests.

Column order (fixed)::

    method, fusion, alpha, seeds, acc, acc_<m>..., d_<m>..., concept_<m>..., best

Modalities appear in manifest order. Cells are ``mean±std`` with four
decimals, copied from each manifest's ``aggregate`` block; ``best`` holds
``*`` on the row with the highest mean accuracy when there are at least
two rows.
"""
import csv
import io
import json

from ..errors import ConfigError

# manifests must agree on these before their rows can share a table
MATCH_FIELDS = ("dataset", "model_shape", "modalities")


def load_manifest(path):
    with open(path, encoding="utf-8") as fh:
        try:
            m = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not a JSON manifest ({exc})") from None
    for key in MATCH_FIELDS + ("aggregate", "method", "fusion", "seeds"):
        if key not in m:
            raise ConfigError(f"{path}: manifest has no {key!r} field")
    return m


def _mismatch(a, b, prefix):
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            found = _mismatch(a.get(k), b.get(k), f"{prefix}.{k}")
            if found:
                return found
        return None
    return None if a == b else prefix


def check_compatible(manifests):
    ref = manifests[0]
    for m in manifests[1:]:
        for key in MATCH_FIELDS:
            where = _mismatch(ref[key], m[key], key)
            if where:
                raise ConfigError(f"manifests disagree on {where!r}")


def _cell(stat):
    return f"{stat['mean']:.4f}±{stat['std']:.4f}"


def header(names):
    return (["method", "fusion", "alpha", "seeds", "acc"] + [f"acc_{m}" for m in names]
            + [f"d_{m}" for m in names] + [f"concept_{m}" for m in names] + ["best"])


def table_rows(manifests):
    check_compatible(manifests)
    names = manifests[0]["modalities"]
    rows = []
    for m in manifests:
        agg = m["aggregate"]
        alpha = m.get("alpha")
        rows.append([m["method"], m["fusion"], "" if alpha is None else repr(float(alpha)), str(len(m["seeds"])),
                     _cell(agg["acc"])]
                    + [_cell(agg["acc_m"][n]) for n in names]
                    + [_cell(agg["d"][n]) for n in names]
                    + [_cell(agg["concept_acc"][n]) for n in names] + [""])
    if len(rows) > 1:
        means = [m["aggregate"]["acc"]["mean"] for m in manifests]
        rows[means.index(max(means))][-1] = "*"
    return header(names), rows


def render(manifests):
    head, rows = table_rows(manifests)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(rows)
    return buf.getvalue()
