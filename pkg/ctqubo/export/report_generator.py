from typing import Any, Dict, List

import structlog

from ctqubo.export.formats import dumps_json
from ctqubo.models.errors import InvalidArgument

logger = structlog.get_logger()

class ReportGenerator:
    """
    Renders solve and pipeline reports.

    JSON output is byte-deterministic (sorted keys, no timestamps) so two runs
    with the same seed produce identical files.
    """

    def __init__(self):
        self.supported_formats = ["json", "markdown"]

    def generate_report(self, data: Dict[str, Any], format: str = "json") -> bytes:
        format = format.lower()

        if format not in self.supported_formats:
            raise InvalidArgument(f"Unsupported format: {format}")

        logger.debug("generating_report", format=format, kind=data.get("kind"))

        if format == "json":
            return self._generate_json(data)
        return self._generate_markdown(data)

    def _generate_json(self, data: Dict) -> bytes:
        return dumps_json(data)

    def _energy_lines(self, data: Dict) -> List[str]:
        energy = data.get("energy", {})
        lines = [
            f"- **Variables:** {data.get('num_vars', 'N/A')}",
            f"- **Theoretical minimum (-offset):** {energy.get('theoretical_minimum', 'N/A')}",
            f"- **Achieved energy:** {energy.get('achieved', 'N/A')}",
        ]
        gap = energy.get("gap_percent")
        lines.append(f"- **Gap:** {gap:.4f}%" if gap is not None else "- **Gap:** N/A")
        lines.append(f"- **One-hot valid:** {data.get('one_hot_valid', 'N/A')}")
        lines.append(f"- **Model fingerprint:** `{data.get('fingerprint', 'N/A')}`")
        return lines

    def _generate_markdown(self, data: Dict) -> bytes:
        title = "Pipeline Run Report" if data.get("kind") == "run" else "QUBO Solve Report"
        sections = [f"# {title}", "", "## Energy", *self._energy_lines(data)]

        samples = data.get("energy", {}).get("samples", [])
        if samples:
            sections += ["", "## Samples", "| restart | energy |", "|---|---|"]
            sections += [f"| {i} | {e} |" for i, e in enumerate(samples)]

        solver = data.get("solver", {})
        if solver:
            sections += ["", "## Solver", "| parameter | value |", "|---|---|"]
            sections += [f"| {k} | {v} |" for k, v in sorted(solver.items())]

        counts = data.get("variable_counts", {})
        if counts:
            sections += ["", "## Variable counts"]
            sections += [f"- **{mode}:** {n}" for mode, n in sorted(counts.items())]

        comparisons = data.get("comparisons", {})
        if comparisons:
            sections += ["", "## Segmentation comparison", "| pair | dice | pixel agreement |", "|---|---|---|"]
            for name, metrics in sorted(comparisons.items()):
                sections.append(f"| {name} | {metrics['dice']:.4f} | {metrics['pixel_agreement']:.4f} |")

        return ("\n".join(sections) + "\n").encode("utf-8")

report_generator = ReportGenerator()
