import numpy as np
import pytest

from ripplerec.kg import (
    NULL_RELATION,
    ParseError,
    build_ripple_set,
    load_item_map,
    load_kg,
    read_vocab,
    sample_neighbors,
    write_vocab,
)

from conftest import write_kg


class TestLoadKg:
    def test_two_line_file(self, tmp_path):
        path = write_kg(tmp_path / "kg.tsv", [("a", "r", "b"), ("b", "r", "c")])
        kg = load_kg(path, undirected=True)
        assert kg.num_entities == 3
        assert kg.num_relations == 1
        r, a, c = kg.relation_vocab["r"], kg.entity_vocab["a"], kg.entity_vocab["c"]
        b = kg.entity_vocab["b"]
        assert [tuple(row) for row in kg.adjacency[b]] == [(r, a), (r, c)]

    def test_first_appearance_vocab_order(self, tmp_path):
        path = write_kg(tmp_path / "kg.tsv", [("x", "r2", "y"), ("y", "r1", "x"), ("z", "r2", "x")])
        kg = load_kg(path)
        assert kg.entity_names == ["x", "y", "z"]
        assert kg.relation_names == ["r2", "r1"]

    def test_duplicates_stored_once(self, tmp_path):
        path = write_kg(tmp_path / "kg.tsv", [("a", "r", "b"), ("a", "r", "b"), ("a", "r", "b")])
        kg = load_kg(path)
        assert len(kg.triples) == 1
        assert kg.degree(kg.entity_vocab["a"]) == 1

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "kg.tsv"
        path.write_text("a\tr\tb\noops-no-tabs\n", encoding="utf-8")
        with pytest.raises(ParseError, match=":2:"):
            load_kg(str(path))

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "kg.tsv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ValueError):
            load_kg(str(path))

    def test_undirected_doubles_degree_minus_self_loops(self, tmp_path):
        rows = [("a", "r", "b"), ("b", "s", "c"), ("c", "r", "c"), ("a", "s", "c")]
        path = write_kg(tmp_path / "kg.tsv", rows)
        directed = load_kg(path, undirected=False)
        undirected = load_kg(path, undirected=True)
        n_self = sum(1 for h, r, t in rows if h == t)
        assert undirected.total_degree() == 2 * directed.total_degree() - n_self

    def test_adjacency_sorted(self, tmp_path):
        rows = [("a", "r2", "c"), ("a", "r1", "b"), ("a", "r1", "a0"), ("a", "r2", "b")]
        path = write_kg(tmp_path / "kg.tsv", rows)
        kg = load_kg(path, undirected=False)
        adj = kg.adjacency[kg.entity_vocab["a"]]
        assert [tuple(p) for p in adj] == sorted(tuple(p) for p in adj)


class TestSampleNeighbors:
    def test_singleton_with_replacement(self, chain_kg):
        kg = chain_kg
        a = kg.entity_vocab["a"]
        sample = sample_neighbors(kg, a, 4, np.random.default_rng(0))
        assert len(sample) == 4
        assert set(sample.entities.tolist()) == {kg.entity_vocab["b"]}
        assert set(sample.relations.tolist()) == {kg.relation_vocab["r"]}

    def test_seed_determinism(self, chain_kg):
        b = chain_kg.entity_vocab["b"]
        s1 = sample_neighbors(chain_kg, b, 8, np.random.default_rng(11))
        s2 = sample_neighbors(chain_kg, b, 8, np.random.default_rng(11))
        np.testing.assert_array_equal(s1.entities, s2.entities)
        np.testing.assert_array_equal(s1.relations, s2.relations)

    def test_uniformity_over_degree_8(self, tmp_path):
        rows = [("hub", "r", f"n{i}") for i in range(8)]
        kg = load_kg(write_kg(tmp_path / "kg.tsv", rows), undirected=False)
        hub = kg.entity_vocab["hub"]
        rng = np.random.default_rng(100)
        n_draws = 10_000
        counts = np.zeros(8)
        for _ in range(n_draws):
            sample = sample_neighbors(kg, hub, 8, rng)
            for e in sample.entities:
                counts[e - 1] += 1
        # each slot is an independent uniform draw over 8 neighbors
        total = n_draws * 8
        p = 1 / 8
        sigma = np.sqrt(total * p * (1 - p))
        assert np.all(np.abs(counts - total * p) < 3 * sigma)

    def test_isolated_entity_padded_with_self_loops(self, tmp_path):
        kg = load_kg(write_kg(tmp_path / "kg.tsv", [("a", "r", "b")]), undirected=False)
        b = kg.entity_vocab["b"]  # no outgoing edges in directed mode
        sample = sample_neighbors(kg, b, 3, np.random.default_rng(0))
        assert np.all(sample.relations == NULL_RELATION)
        assert np.all(sample.entities == b)

    def test_invalid_size_rejected(self, chain_kg):
        with pytest.raises(ValueError):
            sample_neighbors(chain_kg, 0, 0, np.random.default_rng(0))


class TestBuildRippleSet:
    def test_chain_unique_choice(self, tmp_path):
        kg = load_kg(write_kg(tmp_path / "kg.tsv", [("e0", "r0", "e1"), ("e1", "r0", "e2")]), undirected=False)
        e0, e1, e2 = (kg.entity_vocab[e] for e in ("e0", "e1", "e2"))
        r0 = kg.relation_vocab["r0"]
        ripple = build_ripple_set(kg, [e0], hops=2, n_p=1, rng=np.random.default_rng(0))
        assert [tuple(ripple.hops[0][0])] == [(e0, r0, e1)]
        assert [tuple(ripple.hops[1][0])] == [(e1, r0, e2)]

    def test_chain_with_replacement_singleton(self, tmp_path):
        kg = load_kg(write_kg(tmp_path / "kg.tsv", [("e0", "r0", "e1"), ("e1", "r0", "e2")]), undirected=False)
        e0 = kg.entity_vocab["e0"]
        ripple = build_ripple_set(kg, [e0], hops=1, n_p=3, rng=np.random.default_rng(0))
        assert ripple.hops[0].shape == (3, 3)
        assert {tuple(row) for row in ripple.hops[0]} == {(e0, 0, kg.entity_vocab["e1"])}

    def test_star_uniformity(self, tmp_path):
        rows = [("hub", "r", f"s{i}") for i in range(5)]
        kg = load_kg(write_kg(tmp_path / "kg.tsv", rows), undirected=False)
        hub = kg.entity_vocab["hub"]
        rng = np.random.default_rng(0)
        n_rebuilds = 10_000
        counts = np.zeros(5)
        for _ in range(n_rebuilds):
            ripple = build_ripple_set(kg, [hub], hops=1, n_p=5, rng=rng)
            for tail in ripple.hops[0][:, 2]:
                counts[tail - 1] += 1
        total = n_rebuilds * 5
        p = 1 / 5
        sigma = np.sqrt(total * p * (1 - p))
        assert np.all(np.abs(counts - total * p) < 3 * sigma)

    def test_head_containment_across_hops(self, tiny_data):
        kg, dataset = tiny_data
        rng = np.random.default_rng(5)
        for user in list(dataset.user_history)[:10]:
            seeds = dataset.item_entities[dataset.user_history[user]]
            ripple = build_ripple_set(kg, seeds, hops=3, n_p=8, rng=rng, user=user)
            prev_tails = set(int(s) for s in seeds)
            for bag in ripple.hops:
                assert set(bag[:, 0].tolist()) <= prev_tails
                prev_tails = set(bag[:, 2].tolist())

    def test_support_subset_of_bfs_frontier(self, tiny_data):
        kg, dataset = tiny_data
        rng = np.random.default_rng(9)
        seeds = dataset.item_entities[dataset.user_history[0]]
        hops = 3
        ripple = build_ripple_set(kg, seeds, hops=hops, n_p=16, rng=rng)
        # brute-force frontier: exhaustive expansion of all triples reachable per hop
        frontier = set(int(s) for s in seeds)
        for bag in ripple.hops:
            reachable = set()
            tails = set()
            for e in frontier:
                for rel, t in kg.adjacency[e]:
                    reachable.add((e, int(rel), int(t)))
                    tails.add(int(t))
            support = {tuple(row) for row in bag}
            assert support <= reachable
            frontier = tails

    def test_byte_exact_reproducibility(self, tiny_data):
        kg, dataset = tiny_data
        seeds = dataset.item_entities[dataset.user_history[0]]
        r1 = build_ripple_set(kg, seeds, 2, 16, np.random.default_rng(77))
        r2 = build_ripple_set(kg, seeds, 2, 16, np.random.default_rng(77))
        for b1, b2 in zip(r1.hops, r2.hops):
            assert b1.tobytes() == b2.tobytes()

    def test_empty_frontier_backfills_previous_hop(self, tmp_path, caplog):
        # directed dead end: e1 has no outgoing triples
        kg = load_kg(write_kg(tmp_path / "kg.tsv", [("e0", "r0", "e1")]), undirected=False)
        e0 = kg.entity_vocab["e0"]
        with caplog.at_level("WARNING"):
            ripple = build_ripple_set(kg, [e0], hops=2, n_p=4, rng=np.random.default_rng(0))
        assert "resampling previous hop" in caplog.text
        np.testing.assert_array_equal(np.unique(ripple.hops[1], axis=0), np.unique(ripple.hops[0], axis=0))

    def test_empty_seeds_rejected(self, chain_kg):
        with pytest.raises(ValueError, match="no seed"):
            build_ripple_set(chain_kg, [], 2, 4, np.random.default_rng(0))

    def test_seed_without_outgoing_triples_rejected(self, tmp_path):
        kg = load_kg(write_kg(tmp_path / "kg.tsv", [("a", "r", "b")]), undirected=False)
        with pytest.raises(ValueError, match="no outgoing"):
            build_ripple_set(kg, [kg.entity_vocab["b"]], 1, 2, np.random.default_rng(0))


class TestVocabAndItemMap:
    def test_vocab_round_trip(self, tmp_path, chain_kg):
        path = tmp_path / "vocab.tsv"
        write_vocab(path, chain_kg.entity_names)
        assert read_vocab(path) == chain_kg.entity_vocab

    def test_item_map_skips_unknown_entities(self, tmp_path, chain_kg):
        path = tmp_path / "map.tsv"
        path.write_text("i0\ta\ni1\tmissing\n", encoding="utf-8")
        mapping = load_item_map(str(path), chain_kg)
        assert mapping == {"i0": chain_kg.entity_vocab["a"]}

    def test_item_map_malformed_rejected(self, tmp_path, chain_kg):
        path = tmp_path / "map.tsv"
        path.write_text("just-one-field\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_item_map(str(path), chain_kg)
