"""Artifact output: atomic file writes, delimited tables, and figures.

All writers are deterministic byte-for-byte given identical inputs: floats
are formatted at 6 significant digits in CSV, JSON is dumped with sorted
keys, and figures are rendered on the Agg backend with fixed metadata.
"""

from __future__ import annotations

import json
import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "fmt6",
    "atomic_write_text",
    "atomic_write_bytes",
    "write_csv",
    "write_json",
    "save_figure",
    "power_curve_figure",
    "coefficient_figure",
    "purity_figure",
    "mass_figure",
    "design_figure",
]


def fmt6(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-qldlab-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt6(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def save_figure(fig, path: str) -> None:
    fig.savefig(path, dpi=120, metadata={"Software": "qldlab"})
    plt.close(fig)


def power_curve_figure(rows: list[dict]):
    fig, ax = plt.subplots(figsize=(6, 4))
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["n"], row["d"], row["m"], row["detector"]), []).append(row)
    for key, grp in sorted(groups.items()):
        grp = sorted(grp, key=lambda r: r["lambda"])
        lams = [r["lambda"] for r in grp]
        power = [r["power"] for r in grp]
        lo = [r["ci_low"] for r in grp]
        hi = [r["ci_high"] for r in grp]
        label = f"n={key[0]}, d={key[1]}, m={key[2]} ({key[3]})"
        ax.plot(lams, power, "o-", label=label)
        ax.fill_between(lams, lo, hi, alpha=0.2)
    ax.axhline(0.5, color="gray", lw=0.8, ls="--")
    ax.set_xlabel(r"expected plant size $\lambda$")
    ax.set_ylabel("detection power")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def coefficient_figure(report_dict: dict, top: int = 20):
    fig, ax = plt.subplots(figsize=(6, 4))
    coeffs = sorted(report_dict.get("coefficients", []),
                    key=lambda c: -c["value_sq"])[:top]
    labels = ["".join(f"({i},{r})" for i, r in c["positions"]) for c in coeffs]
    vals = [c["value_sq"] for c in coeffs]
    ax.bar(range(len(vals)), vals)
    ax.set_xticks(range(len(vals)))
    ax.set_xticklabels(labels, rotation=90, fontsize=6)
    ax.set_ylabel("squared coefficient")
    ax.set_title(f"degree {report_dict.get('degree')}: total {report_dict.get('total'):.4g}")
    fig.tight_layout()
    return fig


def purity_figure(purities: list[float], bound_curve: list[float]):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(purities)), purities, "o-", label="sample purity")
    ax.plot(range(len(bound_curve)), bound_curve, "s--", label="decay bound")
    ax.set_xlabel("channel stage")
    ax.set_ylabel(r"$\mathrm{tr}(\rho^2)$")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    return fig


def mass_figure(rows: list[dict]):
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [r["positions"] for r in rows]
    vals = [r["mu"] for r in rows]
    ax.bar(range(len(vals)), vals)
    ax.set_xticks(range(len(vals)))
    ax.set_xticklabels(labels, rotation=60, fontsize=6)
    ax.set_ylabel(r"$\mu_W$")
    fig.tight_layout()
    return fig


def design_figure(report):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar([0, 1], [report.eig_ratio_min, report.eig_ratio_max],
           tick_label=["min ratio", "max ratio"])
    ax.axhline(1.0, color="gray", ls="--", lw=0.8)
    ax.set_ylabel("Haar / ensemble generalized eigenvalue")
    ax.set_title(f"{report.ensemble} k={report.order}: eps = {report.epsilon:.4g}")
    fig.tight_layout()
    return fig
