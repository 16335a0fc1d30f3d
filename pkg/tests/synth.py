"""Synthetic device-page corpora with controlled text perturbation.

Five structurally distinct page skeletons stand in for device models;
instances of a template mutate at most a given fraction of their text
characters, mimicking administrator-customized fields on otherwise
identical pages.
"""

from __future__ import annotations

import json
import random
import string
from pathlib import Path

TEMPLATES = {
    "alpha": (
        "<html><head><title>PowerStation Manager</title></head><body>"
        "<h1>PowerStation Manager Console</h1>"
        "<table><tr><td>Unit model</td><td>PS-9000 revision C</td></tr>"
        "<tr><td>Firmware build</td><td>release 14.2.7 stable channel</td></tr>"
        "<tr><td>Operator note</td><td>{note}</td></tr>"
        "<tr><td>Grid segment</td><td>feeder twelve southern interchange loop</td></tr></table>"
        "<p>Scheduled maintenance window opens every second sunday of the month.</p>"
        "<p>Contact the utility operations desk before switching breakers.</p>"
        "</body></html>"
    ),
    "bravo": (
        "<html><head><title>CamView NVR</title></head><body>"
        "<div id='top'><span>CamView network video recorder</span></div>"
        "<ul><li>Channels active sixteen of sixteen</li>"
        "<li>Retention policy ninety days rolling archive</li>"
        "<li>Installed at {note}</li>"
        "<li>Codec profile h264 high latency tuned</li></ul>"
        "<div class='foot'>Streaming service heartbeat nominal across all encoders</div>"
        "</body></html>"
    ),
    "charlie": (
        "<html><head><title>AirHandler Panel</title></head><body>"
        "<h2>Rooftop air handler control panel</h2>"
        "<form><fieldset><legend>Climate schedule</legend>"
        "<label>Supply fan duty cycle weekdays</label>"
        "<label>Economizer damper position holiday override</label>"
        "<label>Zone tag {note}</label>"
        "</fieldset></form>"
        "<p>Filter differential pressure within tolerance band.</p>"
        "<p>Chilled water valve actuator calibrated last season.</p>"
        "</body></html>"
    ),
    "delta": (
        "<html><head><title>FlowMeter Gateway</title></head><body>"
        "<section><h3>Flow telemetry gateway status</h3>"
        "<dl><dt>Pipeline pressure</dt><dd>six point four bar average</dd>"
        "<dt>Totalizer</dt><dd>one million cubic meters and counting</dd>"
        "<dt>Site label</dt><dd>{note}</dd></dl></section>"
        "<footer>Modbus polling interval thirty seconds over serial bridge</footer>"
        "</body></html>"
    ),
    "echo": (
        "<html><head><title>RackPower PDU</title></head><body>"
        "<nav><a>overview</a><a>outlets</a><a>logging</a><a>network</a></nav>"
        "<article><h4>Rack power distribution overview</h4>"
        "<div class='bank'><span>bank one primary compute striped feeds</span>"
        "<em>twelve point one amperes instantaneous draw measured</em></div>"
        "<div class='bank'><span>bank two leaf switching fabric redundant</span>"
        "<em>seven point eight amperes instantaneous draw measured</em></div>"
        "<div class='bank'><span>cabinet marker {note}</span>"
        "<em>zero point two amperes standby trickle</em></div></article>"
        "<aside>Inlet temperature probe twenty four celsius, humidity forty percent.</aside>"
        "<aside>Breaker trip curves follow the colocation electrical handbook.</aside>"
        "</body></html>"
    ),
}

NOTES = [
    "bay seven", "bay nine", "north hall", "south hall", "annex two",
    "mezzanine", "level four", "pod eleven", "suite six", "wing c",
    "row fifteen", "dock three", "cell eight", "vault one", "loft five",
    "tier two", "ring main", "block d", "yard gate", "roof west",
]


def mutate_text(html: str, fraction: float, rng: random.Random) -> str:
    """Mutate at most *fraction* of the text characters outside markup."""
    chars = list(html)
    # positions of letters that sit outside angle brackets
    depth = 0
    editable = []
    for i, ch in enumerate(chars):
        if ch == "<":
            depth += 1
        elif ch == ">":
            depth = max(0, depth - 1)
        elif depth == 0 and ch.isalpha():
            editable.append(i)
    budget = int(len(editable) * fraction)
    for i in rng.sample(editable, min(budget, len(editable))):
        chars[i] = rng.choice(string.ascii_lowercase)
    return "".join(chars)


def build_corpus(
    root: Path,
    templates: list[str] | None = None,
    per_template: int = 20,
    mutation: float = 0.05,
    seed: int = 7,
) -> tuple[Path, dict[str, str]]:
    """Write a manifest + HTML corpus under *root*.

    Returns (manifest path, page_id -> template label truths).
    """
    rng = random.Random(seed)
    names = templates or list(TEMPLATES)
    root.mkdir(parents=True, exist_ok=True)
    html_dir = root / "html"
    html_dir.mkdir(exist_ok=True)
    manifest = root / "manifest.jsonl"
    truths: dict[str, str] = {}
    lines = []
    for t_index, name in enumerate(names):
        for k in range(per_template):
            page_id = f"{name}-{k:03d}"
            note = NOTES[k % len(NOTES)]
            html = TEMPLATES[name].format(note=f"{note} {name} {k}")
            if k > 0:
                html = mutate_text(html, mutation, rng)
            path = html_dir / f"{page_id}.html"
            path.write_bytes(html.encode("utf-8"))
            lines.append(json.dumps({
                "page_id": page_id,
                "ip": f"10.{t_index}.{k // 250}.{k % 250 + 1}",
                "port": 8080,
                "html_path": f"html/{page_id}.html",
            }))
            truths[page_id] = name
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest, truths
