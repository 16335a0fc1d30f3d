import sys
from pathlib import Path

import pytest

# make sibling test helper modules (oracles, synth) importable
sys.path.insert(0, str(Path(__file__).parent))

from pagegeo.corpus import PageRecord, parse_dom  # noqa: E402


def make_page(page_id: str, html: str, ip: str = "192.0.2.1", port: int = 80) -> PageRecord:
    return PageRecord(page_id=page_id, ip=ip, port=port, html=html.encode("utf-8"))


def tree_of(page_id: str, html: str):
    return parse_dom(make_page(page_id, html))


@pytest.fixture
def golden_dir() -> Path:
    return Path(__file__).parent / "data" / "golden"
