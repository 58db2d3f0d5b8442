#!/usr/bin/env python3
"""Fetch and prepare the benchmark datasets used by the acceptance suite.

Produces data/<name>.edges ("u v" per line) and data/<name>.labels
("node_id label_id" per line) for:

  political  -- the political-blogs web graph (labels: 2 leanings)
  cora       -- citation graph, 7 classes
  citeseer   -- citation graph, 6 classes
  pubmed     -- citation graph, 3 classes

The harness applies largest-connected-component extraction itself, so the
files written here are the raw symmetrized graphs.

Requires network access and numpy (for the pickled citation files).

    python3 scripts/fetch_datasets.py [--only NAME] [--data-dir DIR]

`--selftest` exercises the parsers on fabricated inputs without network.
"""

import argparse
import io
import pickle
import re
import sys
import tempfile
import urllib.request
import zipfile
from collections import defaultdict
from pathlib import Path

POLBLOGS_URLS = [
    "https://websites.umich.edu/~mejn/netdata/polblogs.zip",
    "http://www-personal.umich.edu/~mejn/netdata/polblogs.zip",
]

PLANETOID_BASE = "https://raw.githubusercontent.com/kimiyoung/planetoid/master/data"
CITATION_NAMES = {"cora": 7, "citeseer": 6, "pubmed": 3}


def download(url: str) -> bytes:
    print(f"  downloading {url}")
    with urllib.request.urlopen(url, timeout=120) as response:
        return response.read()


def parse_gml(text: str):
    """Minimal GML reader for node id/value and edge source/target blocks."""
    labels = {}
    edges = []
    node_blocks = re.findall(r"node\s*\[(.*?)\]", text, flags=re.S)
    for block in node_blocks:
        id_match = re.search(r"\bid\s+(\d+)", block)
        value_match = re.search(r"\bvalue\s+(\d+)", block)
        if id_match:
            labels[int(id_match.group(1))] = (
                int(value_match.group(1)) if value_match else 0
            )
    edge_blocks = re.findall(r"edge\s*\[(.*?)\]", text, flags=re.S)
    for block in edge_blocks:
        s = re.search(r"\bsource\s+(\d+)", block)
        t = re.search(r"\btarget\s+(\d+)", block)
        if s and t:
            edges.append((int(s.group(1)), int(t.group(1))))
    return labels, edges


def write_graph(data_dir: Path, name: str, edges, labels):
    undirected = set()
    for u, v in edges:
        if u == v:
            continue
        undirected.add((min(u, v), max(u, v)))
    edges_path = data_dir / f"{name}.edges"
    with edges_path.open("w") as f:
        for u, v in sorted(undirected):
            f.write(f"{u} {v}\n")
    labels_path = data_dir / f"{name}.labels"
    with labels_path.open("w") as f:
        for node in sorted(labels):
            f.write(f"{node} {labels[node]}\n")
    print(f"  wrote {edges_path} ({len(undirected)} edges) and {labels_path} "
          f"({len(labels)} labels)")


def fetch_political(data_dir: Path):
    print("political:")
    last_error = None
    for url in POLBLOGS_URLS:
        try:
            payload = download(url)
            break
        except Exception as exc:  # noqa: BLE001 - try the next mirror
            last_error = exc
            print(f"  failed: {exc}")
    else:
        raise RuntimeError(f"could not download polblogs: {last_error}")
    with zipfile.ZipFile(io.BytesIO(payload)) as archive:
        gml_name = next(n for n in archive.namelist() if n.endswith(".gml"))
        text = archive.read(gml_name).decode("latin1")
    labels, edges = parse_gml(text)
    write_graph(data_dir, "political", edges, labels)


def load_planetoid_pickle(payload: bytes):
    return pickle.loads(payload, encoding="latin1")


def fetch_citation(data_dir: Path, name: str):
    print(f"{name}:")
    graph = load_planetoid_pickle(download(f"{PLANETOID_BASE}/ind.{name}.graph"))
    ally = load_planetoid_pickle(download(f"{PLANETOID_BASE}/ind.{name}.ally"))
    ty = load_planetoid_pickle(download(f"{PLANETOID_BASE}/ind.{name}.ty"))
    test_index = [
        int(line)
        for line in download(f"{PLANETOID_BASE}/ind.{name}.test.index").split()
    ]
    edges = []
    for u, neighbors in graph.items():
        for v in neighbors:
            edges.append((int(u), int(v)))
    labels = {}
    for node in range(ally.shape[0]):
        row = ally[node]
        if row.sum() > 0:
            labels[node] = int(row.argmax())
    # ty rows are aligned with the test.index file's order.
    for node, row in zip(test_index, ty):
        if row.sum() > 0:
            labels[int(node)] = int(row.argmax())
    expected_k = CITATION_NAMES[name]
    k = len(set(labels.values()))
    if k != expected_k:
        print(f"  warning: found {k} classes, expected {expected_k}")
    write_graph(data_dir, name, edges, labels)


def selftest():
    gml = """
    graph [
      node [ id 0 value 1 label "a" ]
      node [ id 1 value 0 ]
      node [ id 2 value 1 ]
      edge [ source 0 target 1 ]
      edge [ source 1 target 0 ]
      edge [ source 1 target 2 ]
      edge [ source 2 target 2 ]
    ]
    """
    labels, edges = parse_gml(gml)
    assert labels == {0: 1, 1: 0, 2: 1}, labels
    assert (0, 1) in edges and (1, 0) in edges and (2, 2) in edges, edges
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        write_graph(tmp, "toy", edges, labels)
        lines = (tmp / "toy.edges").read_text().strip().splitlines()
        assert lines == ["0 1", "1 2"], lines  # dedup + self-loop dropped
        lines = (tmp / "toy.labels").read_text().strip().splitlines()
        assert lines == ["0 1", "1 0", "2 1"], lines

    adjacency = defaultdict(list, {0: [1], 1: [0, 2], 2: [1]})
    payload = pickle.dumps(dict(adjacency))
    back = load_planetoid_pickle(payload)
    assert back[1] == [0, 2]
    print("selftest ok")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--only", choices=["political", *CITATION_NAMES])
    parser.add_argument("--data-dir", default=Path(__file__).resolve().parent.parent / "data")
    parser.add_argument("--selftest", action="store_true")
    args = parser.parse_args()
    if args.selftest:
        selftest()
        return
    data_dir = Path(args.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    targets = [args.only] if args.only else ["political", *CITATION_NAMES]
    failures = []
    for name in targets:
        try:
            if name == "political":
                fetch_political(data_dir)
            else:
                fetch_citation(data_dir, name)
        except Exception as exc:  # noqa: BLE001 - report all failures at once
            failures.append((name, exc))
            print(f"  FAILED: {exc}")
    if failures:
        sys.exit(f"failed to fetch: {', '.join(name for name, _ in failures)}")


if __name__ == "__main__":
    main()
