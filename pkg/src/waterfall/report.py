"""Markdown tables, JSON and rule listings from an audit bundle."""
from __future__ import annotations

from pathlib import Path

from .audit import AuditBundle
from .learners.rules import RuleSet

DISPLAY = {"biased": "Biased", "lfr": "LFR", "dir": "DIR", "pr": "PR", "roc": "ROC", "eo": "EO",
           "ceo": "CEO"}
TABLE1_COLUMNS = ("Model", "Accuracy", "Disparate Impact (1.0)", "Average Odds (0.0)",
                  "Equal Opportunity (0.0)", "Statistical Parity (0.0)")
TABLE1_FIELDS = ("accuracy", "disparate_impact", "average_odds", "equal_opportunity",
                 "statistical_parity")
TABLE2_COLUMNS = ("Fairness Model", "Agree Ratio", "Disagree(+) Ratio", "Disagree(-) Ratio",
                  "Meta Clf Accuracy", "Agree Precision", "Disagree(+) Precision",
                  "Disagree(-) Precision")
TABLE2_FIELDS = ("agree_ratio", "disagree_pos_ratio", "disagree_neg_ratio", "meta_accuracy",
                 "agree_precision", "disagree_pos_precision", "disagree_neg_precision")
FORMATS = ("md", "json", "rules")


class ReportError(OSError):
    pass


def percent_cell(stat: dict | None) -> str:
    """Mean and std as percentages, e.g. ``83.1%/±1.7``."""
    if stat is None:
        return "n/a"
    return f"{100 * stat['mean']:.1f}%/±{100 * stat['std']:.1f}"


def _short(x: float) -> str:
    s = f"{x:.2f}"
    return s[1:] if s.startswith("0.") else s


def metric_cell(stat: dict | None) -> str:
    """Mean and std to two decimals, e.g. ``0.75/±.49``."""
    if stat is None:
        return "n/a"
    return f"{stat['mean']:.2f}/±{_short(stat['std'])}"


def _row(cells) -> str:
    return "| " + " | ".join(cells) + " |"


def _header(columns) -> list[str]:
    return [_row(columns), _row(["---"] * len(columns))]


def table1_markdown(bundle: AuditBundle) -> str:
    lines = _header(TABLE1_COLUMNS)
    for name, row in bundle.table1().items():
        label = DISPLAY.get(name, name)
        if row is None:
            lines.append(_row([label] + ["failed"] * (len(TABLE1_COLUMNS) - 1)))
            continue
        cells = [percent_cell(row["accuracy"])] + [metric_cell(row[f]) for f in TABLE1_FIELDS[1:]]
        lines.append(_row([label] + cells))
    return "\n".join(lines) + "\n"


def table2_markdown(bundle: AuditBundle) -> str:
    lines = _header(TABLE2_COLUMNS)
    for name, row in bundle.table2().items():
        label = DISPLAY.get(name, name)
        if row is None:
            lines.append(_row([label] + ["failed"] * (len(TABLE2_COLUMNS) - 1)))
            continue
        lines.append(_row([label] + [percent_cell(row[f]) for f in TABLE2_FIELDS]))
    return "\n".join(lines) + "\n"


def markdown(bundle: AuditBundle) -> str:
    ds = bundle.dataset
    parts = [
        f"# Audit: {bundle.config['dataset']} ({ds['n']} records, {len(bundle.folds)} folds, "
        f"seed {bundle.config['seed']})\n",
        f"Protected attribute: {ds['protected']}\n",
        "## Fairness\n", table1_markdown(bundle),
        "## Treatment changes\n", table2_markdown(bundle),
    ]
    scans = [(f.index, f.scan) for f in bundle.folds if f.scan is not None]
    if scans:
        parts.append("## Bias scan\n")
        for i, s in scans:
            parts.append(f"- fold {i}: {s.subgroup.describe()} (score {s.score:.2f}, q {s.q:.2f}, "
                         f"n {s.n}, {s.direction})\n")
        parts.append("\n")
    failed = bundle.failed_methods()
    if failed:
        parts.append("## Failures\n")
        for f in bundle.folds:
            for m in failed:
                if f.methods[m].error:
                    parts.append(f"- {DISPLAY.get(m, m)} fold {f.index}: {f.methods[m].error}\n")
    return "\n".join(p.rstrip("\n") + "\n" for p in parts)


def rules_files(bundle: AuditBundle) -> dict[str, str]:
    """One rules file per (method, fold)."""
    out = {}
    for f in bundle.folds:
        for m in bundle.methods:
            r = f.methods[m]
            rs = r.rules if r.rules is not None else RuleSet((), (f"method failed: {r.error}",))
            out[f"rules/{m}_fold{f.index}.txt"] = rs.render()
    return out


def render(bundle: AuditBundle, fmt: str, out_dir=None) -> dict[str, str]:
    """File name -> content; written under ``out_dir`` when given."""
    if fmt == "md":
        files = {"tables.md": markdown(bundle)}
    elif fmt == "json":
        files = {"bundle.json": bundle.to_json()}
    elif fmt == "rules":
        files = rules_files(bundle)
    else:
        raise ValueError(f"format must be one of {FORMATS}")
    if out_dir is not None:
        root = Path(out_dir)
        try:
            for name, text in files.items():
                path = root / name
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text)
        except OSError as exc:
            raise ReportError(f"cannot write report: {exc}") from exc
    return files
