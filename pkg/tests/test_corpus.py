import json

import pytest

from conftest import make_page
from pagegeo.corpus import (
    PageUnparseable,
    load_corpus,
    parse_dom,
    serialize_page,
)


def write_manifest(tmp_path, entries):
    lines = []
    for e in entries:
        html = e.pop("_html", "<html><body>x</body></html>")
        if html is not None:
            (tmp_path / e["html_path"]).write_text(html, encoding="utf-8")
        lines.append(json.dumps(e))
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


class TestLoadCorpus:
    def test_missing_path_fatal(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "nope.jsonl")

    def test_empty_manifest(self, tmp_path):
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text("", encoding="utf-8")
        result = load_corpus(manifest)
        assert result.records == []
        assert result.skipped_count == 0

    def test_missing_file_skipped(self, tmp_path):
        manifest = write_manifest(tmp_path, [
            {"page_id": "a", "ip": "10.0.0.1", "port": 80, "html_path": "a.html"},
            {"page_id": "b", "ip": "10.0.0.2", "port": 80, "html_path": "missing.html",
             "_html": None},
            {"page_id": "c", "ip": "10.0.0.3", "port": 80, "html_path": "c.html"},
        ])
        result = load_corpus(manifest)
        assert [r.page_id for r in result.records] == ["a", "c"]
        assert result.skipped_count == 1

    def test_malformed_line_and_bad_ip_skipped(self, tmp_path):
        (tmp_path / "x.html").write_text("<html></html>")
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text(
            '{"page_id": "ok", "ip": "2001:db8::1", "port": 443, "html_path": "x.html"}\n'
            "this is not json\n"
            '{"page_id": "bad", "ip": "999.1.1.1", "port": 80, "html_path": "x.html"}\n',
            encoding="utf-8",
        )
        result = load_corpus(manifest)
        assert [r.page_id for r in result.records] == ["ok"]
        assert result.skipped_count == 2

    def test_duplicate_page_id_skipped(self, tmp_path):
        manifest = write_manifest(tmp_path, [
            {"page_id": "dup", "ip": "10.0.0.1", "port": 80, "html_path": "a.html"},
            {"page_id": "dup", "ip": "10.0.0.2", "port": 80, "html_path": "b.html"},
        ])
        result = load_corpus(manifest)
        assert len(result.records) == 1
        assert result.skipped_count == 1

    def test_ten_page_fixture_sorted(self, tmp_path):
        entries = [
            {"page_id": f"p{i:02d}", "ip": f"10.0.0.{i + 1}", "port": 80,
             "html_path": f"p{i:02d}.html"}
            for i in reversed(range(10))
        ]
        manifest = write_manifest(tmp_path, entries)
        result = load_corpus(manifest)
        assert [r.page_id for r in result.records] == [f"p{i:02d}" for i in range(10)]
        assert result.skipped_count == 0

    def test_directory_argument_uses_manifest_inside(self, tmp_path):
        write_manifest(tmp_path, [
            {"page_id": "a", "ip": "10.0.0.1", "port": 80, "html_path": "a.html"},
        ])
        result = load_corpus(tmp_path)
        assert len(result.records) == 1


class TestParseDom:
    def test_basic_normalization(self):
        tree = parse_dom(make_page("p", "<HTML><BODY>Hi</BODY></HTML>"))
        assert tree.root.tag == "html"
        body = tree.root.children[0]
        assert body.tag == "body"
        assert body.text == "Hi"

    def test_whitespace_collapse(self):
        tree = parse_dom(make_page("p", "<div> a   b </div>"))
        assert tree.root.tag == "div"
        assert tree.root.text == "a b"

    def test_script_and_style_text_dropped(self):
        html = "<html><head><style>.x{color:red}</style></head><body><script>var x=1</script>ok</body></html>"
        tree = parse_dom(make_page("p", html))
        texts = [n.text for n in tree.walk() if n.text]
        assert texts == ["ok"]
        # the elements themselves survive as structure
        tags = [n.tag for n in tree.walk()]
        assert "script" in tags and "style" in tags

    def test_comments_dropped(self):
        tree = parse_dom(make_page("p", "<div><!-- hidden -->shown</div>"))
        assert tree.root.text == "shown"

    def test_unclosed_tags_recovered(self):
        tree = parse_dom(make_page("p", "<html><body><p>one<p>two</body></html>"))
        body = tree.root.children[0]
        # both paragraphs exist; the first swallowed the second (best effort),
        # but no text is lost
        texts = sorted(n.text for n in tree.walk() if n.text)
        assert texts == ["one", "two"]

    def test_stray_end_tag_ignored(self):
        tree = parse_dom(make_page("p", "<div>a</span></div>"))
        assert tree.root.text == "a"

    def test_zero_elements_unparseable(self):
        with pytest.raises(PageUnparseable):
            parse_dom(make_page("p", "just plain text, no markup"))

    def test_attrs_keep_id_class_names_only(self):
        tree = parse_dom(make_page(
            "p", '<div id="dev-7" class="main" style="x" data-k="v">t</div>',
        ))
        assert tree.root.attrs == [("id", ""), ("class", "")]

    def test_node_count(self):
        tree = parse_dom(make_page("p", "<html><body><div>a</div><div>b</div></body></html>"))
        assert tree.node_count == 4

    def test_multiple_top_level_wrapped(self):
        tree = parse_dom(make_page("p", "<div>a</div><div>b</div>"))
        assert tree.root.tag == "html"
        assert [c.tag for c in tree.root.children] == ["div", "div"]

    def test_lossy_decode(self):
        page = make_page("p", "")
        page = type(page)(page_id="p", ip="10.0.0.1", port=80,
                          html=b"<div>caf\xe9</div>")  # latin-1 bytes
        tree = parse_dom(page)
        assert tree.root.tag == "div"
        assert "caf" in tree.root.text


class TestSerializePage:
    def test_single_empty_root(self):
        tree = parse_dom(make_page("p", "<html></html>"))
        sp = serialize_page(tree, "p")
        assert sp.composite == b"html(0)\x00"

    def test_deterministic(self):
        html = "<html><body><div id='x'>hello</div></body></html>"
        t1 = parse_dom(make_page("p", html))
        t2 = parse_dom(make_page("p", html))
        assert serialize_page(t1, "p").composite == serialize_page(t2, "p").composite

    def test_text_only_difference_confined_to_text_section(self):
        a = parse_dom(make_page("a", "<html><body><p>boston</p></body></html>"))
        b = parse_dom(make_page("b", "<html><body><p>chicago</p></body></html>"))
        ca = serialize_page(a, "a").composite
        cb = serialize_page(b, "b").composite
        sa, _, ta = ca.partition(b"\x00")
        sb, _, tb = cb.partition(b"\x00")
        assert sa == sb
        assert ta != tb

    def test_structure_tokens_carry_depth_and_attr_names(self):
        tree = parse_dom(make_page("p", "<html><body class='c'><p>x</p></body></html>"))
        structure = serialize_page(tree, "p").composite.partition(b"\x00")[0]
        assert structure == b"html(0)body(1)@classp(2)"

    def test_script_drop_keeps_structure_token(self):
        with_script = parse_dom(make_page("a", "<html><body><script>var x=1</script></body></html>"))
        without = parse_dom(make_page("b", "<html><body><script></script></body></html>"))
        ca = serialize_page(with_script, "a").composite
        cb = serialize_page(without, "b").composite
        assert ca == cb
        assert b"script" in ca.partition(b"\x00")[0]


def test_reserialization_idempotent():
    """Parsing the re-serialized visible text reproduces the collapsed text."""
    html = "<html><body><p>  Main\t\tSTREET  </p><p>x  y</p></body></html>"
    tree = parse_dom(make_page("p", html))
    text_section = serialize_page(tree, "p").composite.partition(b"\x00")[2].decode()
    rewrapped = parse_dom(make_page("q", f"<div>{text_section}</div>"))
    assert rewrapped.root.text == text_section
