"""Self-contained HTML rendering of an experiment suite."""

import html
import json
import logging
from datetime import datetime

from markdown_it import MarkdownIt
from pygments import highlight
from pygments.formatters import HtmlFormatter
from pygments.lexers import JsonLexer

from pathlaw.experiments import REGISTRY, ExperimentReport
from pathlaw.report import dumps_json, to_plain
from pathlaw.stattests import TestReport

log = logging.getLogger("pathlaw")


# html: False escapes raw HTML in descriptions
md = MarkdownIt("js-default", {"html": False, "typographer": True, "linkify": True})

PYGMENTS_CSS = HtmlFormatter(style="friendly").get_style_defs(".highlight")

_PASS = "#1e7e34"
_FAIL = "#b3261e"

CSS_TEMPLATE = f"""
body {{
    font: 14px/1.5 system-ui, sans-serif;
    color: #1f1f1f;
    max-width: 960px;
    margin: 24px auto;
    padding: 0 16px;
}}

.suite-header {{ border-bottom: 1px solid #ccc; margin-bottom: 24px; }}
.suite-header h1 {{ font-size: 22px; margin: 0 0 4px; }}
.suite-meta {{ color: #555; font-size: 13px; display: flex; gap: 12px; }}
.mono {{ font-family: ui-monospace, monospace; }}

.experiment {{ margin-bottom: 20px; padding: 12px 16px; border-left: 3px solid; }}
.experiment-pass {{ border-color: {_PASS}; }}
.experiment-fail {{ border-color: {_FAIL}; background: #fdf3f2; }}
.experiment h2 {{ font-size: 16px; margin: 0 0 6px; display: flex; gap: 10px; }}

.badge {{ font-size: 11px; text-transform: uppercase; padding: 1px 6px; color: white; }}
.badge-pass {{ background: {_PASS}; }}
.badge-fail {{ background: {_FAIL}; }}

.description p {{ margin: 0 0 6px; }}

table.tests {{ border-collapse: collapse; width: 100%; font-size: 12px; margin: 8px 0; }}
table.tests th, table.tests td {{ text-align: right; padding: 2px 8px; border-bottom: 1px solid #e5e5e5; }}
table.tests th:first-child, table.tests td:first-child {{ text-align: left; }}
tr.test-fail td {{ color: {_FAIL}; font-weight: 600; }}

details.spec summary {{ cursor: pointer; color: #555; font-size: 12px; }}
details.spec pre {{ font-size: 11px; overflow-x: auto; }}

{PYGMENTS_CSS}
"""


def _escape_html(text: str) -> str:
    if not isinstance(text, str):
        text = str(text)
    return html.escape(text, quote=True)


def _render_markdown(text: str) -> str:
    return md.render(text)


def _format_number(value: float | None) -> str:
    value = to_plain(value)
    if value is None:
        return "–"
    return f"{value:.4g}"


def _render_test_row(test: TestReport) -> str:
    row_class = "test-pass" if test.passed else "test-fail"
    return (
        f'                <tr class="{row_class}">'
        f"<td>{_escape_html(test.test_name)}</td>"
        f"<td>{_format_number(test.statistic)}</td>"
        f"<td>{_format_number(test.p_value)}</td>"
        f"<td>{_format_number(test.threshold)}</td>"
        f"<td>{test.n_lhs}</td><td>{test.n_rhs}</td>"
        f"<td>{'pass' if test.passed else 'FAIL'}</td></tr>"
    )


def _render_spec(report: ExperimentReport) -> str:
    spec_json = json.dumps(report.spec.to_dict(), sort_keys=True, indent=2)
    highlighted = highlight(spec_json, JsonLexer(), HtmlFormatter())
    return (
        '            <details class="spec">\n'
        "                <summary>Resolved spec</summary>\n"
        f"                {highlighted}\n"
        "            </details>"
    )


def _render_experiment(report: ExperimentReport) -> str:
    definition = REGISTRY[report.spec.id]
    status = "pass" if report.overall_pass else "fail"
    experiment_id = _escape_html(report.spec.id.value)
    parts = [
        f'        <section class="experiment experiment-{status}" id="{experiment_id}">',
        "            <h2>",
        f'                <span class="mono">{experiment_id}</span>',
        f"                <span>{_escape_html(definition.title)}</span>",
        f'                <span class="badge badge-{status}">{status}</span>',
        "            </h2>",
        f'            <div class="description">{_render_markdown(definition.description)}</div>',
        f'            <div class="suite-meta">Wall time {report.wall_time_s:.1f}s</div>',
        '            <table class="tests">',
        "                <tr><th>Test</th><th>Statistic</th><th>p</th><th>Threshold</th>"
        "<th>n lhs</th><th>n rhs</th><th>Result</th></tr>",
    ]
    parts.extend(_render_test_row(test) for test in report.tests)
    parts.append("            </table>")
    parts.append(_render_spec(report))
    parts.append("        </section>")
    return "\n".join(parts)


def build_html(reports: list[ExperimentReport], summary: dict) -> str:
    """Generate a complete HTML document for a suite run.

    Args:
        reports: experiment reports in run order
        summary: suite summary as built by report.suite_summary

    Returns:
        HTML5 document with inline CSS and no external resources
    """
    generated = datetime.now().isoformat(timespec="seconds")
    overall = "pass" if summary.get("overall_pass") else "fail"
    parts = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '    <meta charset="UTF-8">',
        '    <meta name="viewport" content="width=device-width, initial-scale=1.0">',
        f'    <meta name="pathlaw-build" content="{_escape_html(summary.get("build_id", ""))}">',
        f'    <meta name="pathlaw-generated" content="{generated}">',
        "    <title>pathlaw suite report</title>",
        "    <style>",
        CSS_TEMPLATE,
        "    </style>",
        "</head>",
        "<body>",
        '    <div class="container">',
        '        <header class="suite-header">',
        "            <h1>Identity-in-law suite</h1>",
        '            <div class="suite-meta">',
        f'                <span class="badge badge-{overall}">{overall}</span>',
        f'                <span class="mono">{_escape_html(summary.get("build_id", ""))}</span>',
        f'                <span>seed {_escape_html(summary.get("seed", ""))}</span>',
        f"                <span>{len(reports)} experiments</span>",
        "            </div>",
        "        </header>",
        '        <details class="spec">',
        "            <summary>Suite summary</summary>",
        f"            {_summary_json_block(summary)}",
        "        </details>",
    ]
    for report in reports:
        parts.append(_render_experiment(report))
    parts.extend(["    </div>", "</body>", "</html>"])
    log.debug("Rendered %d experiments to HTML", len(reports))
    return "\n".join(parts) + "\n"


def _summary_json_block(summary: dict) -> str:
    return highlight(dumps_json(summary), JsonLexer(), HtmlFormatter())
