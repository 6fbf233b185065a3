# fedtoe/commands/artifacts.py
"""Result files: CSV with 12 significant digits, JSON lines and SVG curves"""

import csv
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

from pydantic import BaseModel

from fedtoe.core.errors import ParameterError
from fedtoe.core.quantizer import bit_cost
from fedtoe.schemas.allocation import ClientLink, UplinkPlan
from fedtoe.schemas.simulation import SimulationResult

logger = logging.getLogger(__name__)

ALLOCATION_FIELDS = ["client_id", "d_m", "W_hz", "B_bits", "R_bps", "q"]
SUMMARY_FIELDS = [
    "scheme", "rounds", "final_loss", "final_grad_norm_sq", "final_test_metric",
    "total_delay_s", "total_attempts", "total_retransmissions", "total_bits", "status",
]


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, (list, tuple)):
        return ";".join(format_value(v) for v in value)
    return str(value)


def write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[dict[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(row.get(key)) for key in fieldnames})
    logger.debug(f"Wrote {path}")
    return path


def write_jsonl(path: Path, records: Iterable[BaseModel]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")
    return path


def allocation_rows(plan: UplinkPlan) -> list[dict[str, Any]]:
    return [
        {"client_id": link.id, "d_m": link.d, "W_hz": link.w, "B_bits": link.b, "R_bps": link.r, "q": link.q}
        for link in plan.links
    ]


def read_allocation(path: Path, p_max: float, m: int, mu: int) -> UplinkPlan:
    """Plan from an allocation CSV; payload sizes follow from each row's level"""
    if not path.is_file():
        raise ParameterError(f"allocation file {path} not found")
    with path.open(encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    missing = set(ALLOCATION_FIELDS) - set(rows[0] if rows else ())
    if missing:
        raise ParameterError(f"allocation file {path} lacks columns {sorted(missing)}")
    links = []
    for row in rows:
        b = int(row["B_bits"]) if row["B_bits"] else None
        links.append(
            ClientLink(
                id=int(row["client_id"]),
                d=float(row["d_m"]),
                w=float(row["W_hz"]),
                p=p_max,
                b=b,
                r=float(row["R_bps"]),
                q=float(row["q"]),
                payload_bits=bit_cost(m, b, mu) if b is not None else 0,
            )
        )
    logger.debug(f"Read {len(links)} links from {path}")
    return UplinkPlan(scheme=path.stem, links=links)


def summary_row(result: SimulationResult) -> dict[str, Any]:
    last = result.records[-1] if result.records else None
    return {
        "scheme": result.scheme,
        "rounds": len(result.records),
        "final_loss": result.final_loss,
        "final_grad_norm_sq": result.final_grad_norm_sq,
        "final_test_metric": last.test_metric if last else None,
        "total_delay_s": result.total_delay,
        "total_attempts": result.total_attempts,
        "total_retransmissions": sum(record.retransmissions for record in result.records),
        "total_bits": result.total_bits,
    }


def plot_curves(results: Sequence[SimulationResult], path: Path) -> Path:
    """Training loss and squared gradient norm per round, one line per scheme"""
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams.update({"svg.hashsalt": "fedtoe", "font.family": "DejaVu Sans"})
    import matplotlib.pyplot as plt

    fig, (loss_ax, grad_ax) = plt.subplots(1, 2, figsize=(10, 3.8), constrained_layout=True)
    for result in results:
        rounds = [record.round for record in result.records]
        loss_ax.plot(rounds, result.losses, label=result.scheme)
        grad_ax.plot(rounds, result.grad_norms, label=result.scheme)
    loss_ax.set_ylabel("Training loss")
    grad_ax.set_ylabel("Squared gradient norm")
    grad_ax.set_yscale("log")
    for ax in (loss_ax, grad_ax):
        ax.set_xlabel("Communication round")
        ax.grid(True, alpha=0.3)
    grad_ax.legend(loc="best", fontsize=8)

    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
