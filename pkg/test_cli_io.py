#!/usr/bin/env python
# test_cli_io.py - Test dataset parsing, path export/import, SVG rendering, validation and the CLI

import os
import sys
import json
import logging
import tempfile

import numpy as np
import pandas as pd
from lxml import etree

from errors import EmptyClass, ParseError
from main import EXIT_BUDGET, EXIT_INPUT, EXIT_OK, main
from numerics.kkt_constraints import ActiveSets
from regpath.explorer import ExploreConfig, run
from regpath.path_graph import PathGraph
from reporting.svg_renderer import SVG_NS, render_svg
from reporting.validation import check_integrity, validate
from storage.dataset_loader import Dataset, load_dataset, parse_line, write_dataset
from storage.path_storage import EVENT_PATH_COLUMNS, export_path, import_path

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger('test_cli_io')


def two_points():
    return Dataset.from_arrays([[1.0], [-1.0]], [1, -1], 1.0)


def explored():
    data = two_points()
    return data, run(data, ExploreConfig(parallel_facets=False))


def _write(directory, name, text):
    path = os.path.join(directory, name)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    return path


def test_parse_line():
    assert parse_line("+1 1:2.0", 1) == (1, {1: 2.0})
    assert parse_line("-1 2:0.5 4:-1", 3) == (-1, {2: 0.5, 4: -1.0})
    try:
        parse_line("+1 1:abc", 2)
    except ParseError as e:
        assert e.line == 2
        assert e.column == 6
    else:
        raise AssertionError("expected ParseError")
    for bad in ("2 1:1.0", "+1 2:1.0 1:1.0", "+1 1"):
        try:
            parse_line(bad, 1)
        except ParseError:
            continue
        raise AssertionError(f"expected ParseError for {bad!r}")


def test_load_dataset_folds_labels_and_orders_positives_first():
    with tempfile.TemporaryDirectory() as tmp:
        path = _write(tmp, 'data.txt', "-1 1:1.0\n\n+1 1:2.0\n")
        data = load_dataset(path, 0.01)
    assert data.n_plus == 1 and data.n_samples == 2
    assert np.allclose(data.X[:, 0], [2.0, 0.01])
    assert np.allclose(data.X[:, 1], [-1.0, -0.01])
    assert data.permutation == (1, 0)


def test_single_class_dataset_is_rejected():
    with tempfile.TemporaryDirectory() as tmp:
        path = _write(tmp, 'data.txt', "+1 1:1.0\n+1 1:2.0\n")
        try:
            load_dataset(path)
        except EmptyClass:
            return
    raise AssertionError("expected EmptyClass")


def test_json_round_trip():
    _, graph = explored()
    restored = import_path(export_path(graph))
    assert set(restored.key_index) == set(graph.key_index)
    for vertex_id, vertex in graph.vertices.items():
        assert restored.vertices[vertex_id].coords == vertex.coords
        assert restored.vertices[vertex_id].edge_links == vertex.edge_links
    for edge_id, edge in graph.edges.items():
        assert restored.edges[edge_id].key == edge.key
        assert restored.edges[edge_id].events == edge.events
        assert restored.edges[edge_id].facet_links == edge.facet_links
    for facet_id, facet in graph.facets.items():
        assert restored.facets[facet_id].boundary.polygon == facet.boundary.polygon
    assert restored.integrity_errors() == []
    assert restored.stats['facets'] == 4


def test_empty_graph_export():
    document = json.loads(export_path(PathGraph()))
    assert document['format'] == 'acpath'
    assert document['facets'] == [] and document['edges'] == [] and document['vertices'] == []


def test_event_path_csv():
    _, graph = explored()
    text = export_path(graph, 'csv')
    with tempfile.TemporaryDirectory() as tmp:
        frame = pd.read_csv(_write(tmp, 'events.csv', text))
    assert list(frame.columns) == EVENT_PATH_COLUMNS
    assert set(frame['sample']) == {0, 1}
    assert (frame['t'] == 1).all()


def test_svg_draws_every_facet_in_the_window():
    _, graph = explored()
    document = render_svg(graph, (2.0, 2.0), event_samples=[0])
    root = etree.fromstring(document.encode('utf-8'))
    ns = {'svg': SVG_NS}
    assert root.get('version') == '1.1'
    assert len(root.xpath("svg:g[@id='facets']/svg:path", namespaces=ns)) == 4
    assert len(root.xpath("svg:g[@id='means']/svg:circle", namespaces=ns)) == 1
    assert len(root.xpath("svg:g[@id='events']/svg:line", namespaces=ns)) == 2


def test_validation_passes_on_an_explored_path():
    data, graph = explored()
    report = validate(graph, data, n_samples=40, window=(2.0, 2.0))
    assert report.passed, report.as_dict()
    assert report.suite('vertex_loop').checked == 4
    assert report.suite('tiling').notes['overlap'] == 0


def test_integrity_check_catches_a_dangling_link():
    _, graph = explored()
    edge = next(iter(graph.edges.values()))
    edge.vertex_links.append(999)
    result = check_integrity(graph)
    assert not result.passed
    assert any('999' in failure for failure in result.failures)


def test_command_line_runs():
    with tempfile.TemporaryDirectory() as tmp:
        dataset = os.path.join(tmp, 'two.txt')
        write_dataset(dataset, [[1.0], [-1.0]], [1, -1])
        out = os.path.join(tmp, 'path.json')
        svg = os.path.join(tmp, 'path.svg')
        common = ['--quiet', '--b-const', '1.0']
        assert main(common + ['trace', dataset, '--out', out, '--svg', svg, '--window', '2,2', '--parallel', '1']) == EXIT_OK
        assert os.path.exists(out) and os.path.exists(svg)
        assert main(common + ['query', out, dataset, '--at', '2,3']) == EXIT_OK
        assert main(common + ['validate', out, dataset, '--samples', '20', '--window', '2,2']) == EXIT_OK
        assert main(common + ['export', out, '--format', 'csv', '--out', os.path.join(tmp, 'e.csv')]) == EXIT_OK
        assert main(common + ['query', out, dataset, '--at', '0.5,0.2']) == EXIT_INPUT
        assert main(common + ['trace', os.path.join(tmp, 'missing.txt')]) == EXIT_INPUT

        partial = os.path.join(tmp, 'partial.json')
        assert main(common + ['trace', dataset, '--out', partial, '--max-layers', '1', '--parallel', '1']) == EXIT_BUDGET
        with open(partial, 'r', encoding='utf-8') as f:
            text = f.read()
        assert len(json.loads(text)['facets']) == 4
        assert ActiveSets.origin(2, 1).canonical_key in import_path(text).key_index


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith('test_') and callable(fn):
            logger.info(f"Running {name}")
            fn()
    logger.info("All CLI and I/O tests passed")
