import math

import numpy as np
import pytest
from mpmath import mp, mpf

from egobatch import (
    Bin,
    ConfigError,
    DataError,
    Dataset,
    DaySequence,
    LabelSet,
    PackingError,
    bhattacharyya,
    combinations,
    ffd_pack,
    select_split,
)


def seq_with_labels(labels, sid, length_pad=None):
    labels = np.asarray(labels)
    return DaySequence(sid, "u1", np.zeros((len(labels), 1)), labels)


class TestFfdPack:
    def test_hand_traced_example(self):
        bins = ffd_pack([7, 5, 4, 3, 2], capacity=9)
        sizes = {7: 0, 5: 1, 4: 2, 3: 3, 2: 4}  # size -> original index
        assert [b.total_frames for b in bins] == [9, 9, 3]
        assert [b.sequence_ids for b in bins] == [[0, 4], [1, 2], [3]]

    def test_single_item(self):
        bins = ffd_pack([5], capacity=5)
        assert len(bins) == 1 and bins[0].total_frames == 5

    def test_oversized_item_rejected(self):
        with pytest.raises(PackingError):
            ffd_pack([6], capacity=5)

    def test_never_exceeds_capacity(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            capacity = int(rng.integers(5, 40))
            sizes = rng.integers(1, capacity + 1, size=rng.integers(1, 25)).tolist()
            bins = ffd_pack(sizes, capacity)
            assert all(b.total_frames <= capacity for b in bins)
            assert sum(len(b.sequence_ids) for b in bins) == len(sizes)
            for b in bins:
                assert b.total_frames == sum(sizes[i] for i in b.sequence_ids)

    def test_no_worse_than_unsorted_first_fit(self):
        def first_fit(sizes, capacity):
            bins = []
            for size in sizes:
                for b in bins:
                    if b + size <= capacity:
                        bins[bins.index(b)] += size
                        break
                else:
                    bins.append(size)
            return len(bins)

        rng = np.random.default_rng(2)
        for _ in range(30):
            capacity = int(rng.integers(5, 30))
            sizes = rng.integers(1, capacity + 1, size=rng.integers(1, 20)).tolist()
            assert len(ffd_pack(sizes, capacity)) <= first_fit(sizes, capacity)

    def test_stable_tie_order(self):
        bins = ffd_pack([3, 3, 3], capacity=3)
        assert [b.sequence_ids for b in bins] == [[0], [1], [2]]

    def test_custom_ids(self):
        bins = ffd_pack([4, 2], capacity=6, ids=["long", "short"])
        assert bins[0].sequence_ids == ["long", "short"]


class TestCombinations:
    def test_three_choose_two(self):
        assert list(combinations(3, 2)) == [(0, 1), (0, 2), (1, 2)]

    def test_four_singletons(self):
        assert list(combinations(4, 1)) == [(0,), (1,), (2,), (3,)]

    def test_count_five_choose_two(self):
        assert len(list(combinations(5, 2))) == 10

    def test_counts_match_binomials(self):
        for total in range(1, 13):
            for choose in range(1, total + 1):
                subsets = list(combinations(total, choose))
                assert len(subsets) == math.comb(total, choose)
                assert len(set(subsets)) == len(subsets)
                assert subsets == sorted(subsets)

    def test_invalid_choose(self):
        with pytest.raises(ConfigError):
            list(combinations(3, 4))
        with pytest.raises(ConfigError):
            list(combinations(3, 0))


def mp_bhattacharyya(p, q):
    """High-precision oracle for the distance."""
    mp.dps = 60
    coeff = sum(mp.sqrt(mpf(a) * mpf(b)) for a, b in zip(p, q))
    return float(-mp.log(coeff)) if coeff > 0 else math.inf


class TestBhattacharyya:
    def test_identical_distributions(self):
        p = [0.2, 0.3, 0.5]
        assert abs(bhattacharyya(p, p)) < 1e-12

    def test_disjoint_support_is_infinite(self):
        assert bhattacharyya([1.0, 0.0], [0.0, 1.0]) == math.inf

    def test_hand_value_against_oracle(self):
        p, q = [0.5, 0.5], [0.25, 0.75]
        expected = mp_bhattacharyya(p, q)
        # -ln(sqrt(.125) + sqrt(.375)) = 0.0346682...
        assert abs(expected - 0.034668) < 1e-6
        assert abs(bhattacharyya(p, q) - expected) < 1e-9

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            size = int(rng.integers(2, 12))
            p = rng.dirichlet(np.ones(size))
            q = rng.dirichlet(np.ones(size))
            mine = bhattacharyya(p, q)
            assert abs(mine - mp_bhattacharyya(p, q)) < 1e-9
            assert mine >= 0.0
            assert abs(mine - bhattacharyya(q, p)) < 1e-15

    def test_zero_iff_equal_on_common_support(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            p = rng.dirichlet(np.ones(5))
            q = rng.dirichlet(np.ones(5))
            if not np.allclose(p, q, atol=1e-12):
                assert bhattacharyya(p, q) > 0.0

    def test_input_validation(self):
        with pytest.raises(DataError):
            bhattacharyya([0.5, 0.5], [0.5, 0.25, 0.25])
        with pytest.raises(DataError):
            bhattacharyya([0.7, 0.7], [0.5, 0.5])
        with pytest.raises(DataError):
            bhattacharyya([-0.1, 1.1], [0.5, 0.5])


from oracles import brute_force_split


def build_dataset(label_lists):
    """One two-frame sequence per bin; capacity keeps them in singleton bins."""
    sequences = [seq_with_labels(labels, f"s{i}") for i, labels in
                 enumerate(label_lists)]
    names = tuple(chr(ord("a") + k) for k in
                  range(int(max(max(ls) for ls in label_lists)) + 1))
    return Dataset(LabelSet(names), sequences)


class TestSelectSplit:
    def test_hand_example_prefers_matching_bin(self):
        # bins: [a,a], [b,b], [a,b], [a,b]; the [a,b] bins match the whole
        # distribution exactly and the lexicographically first one wins
        ds = build_dataset([[0, 0], [1, 1], [0, 1], [0, 1]])
        result = select_split(ds, num_bins=4, test_bins=1, val_bins=1, capacity=3)
        assert [b.sequence_ids for b in result.bins] == [["s0"], ["s1"], ["s2"], ["s3"]]
        assert result.test_bin_ids == (2,)
        assert result.objective_test < 1e-9
        assert result.val_bin_ids == (3,)
        assert result.objective_val < 1e-9
        assert set(result.train_bin_ids) == {0, 1}

    def test_identical_bins_tie_to_lexicographic_first(self):
        ds = build_dataset([[0, 1], [0, 1], [0, 1], [0, 1]])
        result = select_split(ds, num_bins=4, test_bins=1, val_bins=1, capacity=3)
        assert result.test_bin_ids == (0,)
        assert result.val_bin_ids == (1,)
        assert result.objective_test < 1e-9

    def test_partition_covers_everything_once(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            count = int(rng.integers(5, 9))
            ds = build_dataset([rng.integers(0, 3, size=2).tolist()
                                for _ in range(count)]
                               + [[0, 1, 2]])  # guarantee every class appears
            result = select_split(ds, num_bins=count + 1, test_bins=1, val_bins=1,
                                  capacity=3)
            all_ids = sorted(result.sequence_ids("test")
                             + result.sequence_ids("val")
                             + result.sequence_ids("train"))
            assert all_ids == sorted(s.sequence_id for s in ds.sequences)

    def test_infeasible_counts_rejected(self):
        ds = build_dataset([[0, 1], [0, 1], [0, 1]])
        with pytest.raises(ConfigError):
            select_split(ds, num_bins=3, test_bins=3, val_bins=1, capacity=3)
        with pytest.raises(ConfigError):
            select_split(ds, num_bins=3, test_bins=2, val_bins=1, capacity=3)

    def test_absent_class_rejected(self):
        sequences = [seq_with_labels([0, 0], "s0"), seq_with_labels([0, 1], "s1"),
                     seq_with_labels([1, 0], "s2")]
        ds = Dataset(LabelSet(("a", "b", "c")), sequences)
        with pytest.raises(DataError):
            select_split(ds, num_bins=3, test_bins=1, val_bins=1, capacity=3)

    def test_stage2_rest_reference_flag(self):
        ds = build_dataset([[0, 0], [1, 1], [0, 1], [0, 1], [0, 1]])
        whole = select_split(ds, 5, 1, 1, capacity=3, stage2_reference="whole")
        rest = select_split(ds, 5, 1, 1, capacity=3, stage2_reference="rest")
        assert whole.test_bin_ids == rest.test_bin_ids
        with pytest.raises(ConfigError):
            select_split(ds, 5, 1, 1, capacity=3, stage2_reference="pool")


class TestSplitOracle:
    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(6)
        for case in range(30):
            num_classes = int(rng.integers(2, 5))
            bin_count = int(rng.integers(4, 9))
            # lengths in (cap/2, cap] force singleton bins in FFD order
            lengths = rng.integers(6, 11, size=bin_count)
            label_lists = []
            for length in lengths:
                labels = rng.integers(0, num_classes, size=length)
                label_lists.append(labels.tolist())
            flat = [l for ls in label_lists for l in ls]
            if len(set(flat)) < num_classes:
                continue
            order = sorted(range(bin_count), key=lambda i: -lengths[i])
            sequences = [seq_with_labels(label_lists[i], f"s{i}")
                         for i in range(bin_count)]
            ds = Dataset(LabelSet(tuple(f"c{k}" for k in range(num_classes))),
                         sequences)
            test_bins = int(rng.integers(1, min(3, bin_count - 2)))
            val_bins = int(rng.integers(1, bin_count - test_bins))
            ref = "whole" if case % 2 == 0 else "rest"
            result = select_split(ds, bin_count, test_bins, val_bins,
                                  capacity=10, stage2_reference=ref)
            assert all(len(b.sequence_ids) == 1 for b in result.bins)
            # the oracle works on bins in the same FFD (descending size) order
            oracle_bins = [label_lists[i] for i in order]
            expect = brute_force_split(oracle_bins, num_classes, test_bins,
                                       val_bins, stage2_reference=ref)
            assert result.test_bin_ids == expect[0]
            assert result.val_bin_ids == expect[1]
            if math.isfinite(expect[2]):
                assert abs(result.objective_test - expect[2]) < 1e-9
            if math.isfinite(expect[3]):
                assert abs(result.objective_val - expect[3]) < 1e-9


class TestSplitJson:
    def test_split_manifest_schema(self, tmp_path):
        ds = build_dataset([[0, 0], [1, 1], [0, 1], [0, 1]])
        result = select_split(ds, num_bins=4, test_bins=1, val_bins=1, capacity=3)
        path = tmp_path / "split.json"
        result.write_json(path)
        import json

        obj = json.loads(path.read_text())
        assert set(obj) == {"test", "val", "train", "objective_test",
                            "objective_val", "bins"}
        assert obj["test"] == ["s2"]
