"""Evolving population event logs, tree extraction and log persistence"""

import json
import struct

import numpy as np
import pytest

from errors import DomainError, LogCorruptedError, LogFormatError, OutOfWindowError, WindowShrinkError
from services.chain import functional_J, functional_tau, functional_total_length, sample_block_path
from services.event_log_io import (
    HEADER,
    decode_binary,
    encode_binary,
    log_from_dict,
    log_to_dict,
    read_event_log,
    write_event_log,
)
from services.evolving import (
    EventLog,
    PopulationEvent,
    extend_log,
    extract_tree,
    functional_series,
    new_event_log,
    zigzag,
)
from services.funcspec import FunctionalSpec
from services.verify import SampleSet, chi_squared_gof, ks_two_sample


@pytest.fixture
def log(ctx):
    return new_event_log(ctx, 60, seed=4242)


def same_arrays(a, b):
    for x, y in zip(a.arrays(), b.arrays()):
        np.testing.assert_array_equal(x, y)


class TestEventLog:

    def test_zigzag(self):
        assert [zigzag(j) for j in (-2, -1, 0, 1, 2)] == [3, 1, 0, 2, 4]

    def test_events_are_valid(self, log):
        extend_log(log, -5.0, 0.0)
        times, offsets, labels, parents = log.arrays()
        assert len(times) == len(log) > 0
        assert np.all(np.diff(times) > 0.0)
        assert np.all((times > -5.0) & (times < 0.0))
        for event in log.events[:200]:
            assert isinstance(event, PopulationEvent)
            assert list(event.participants) == sorted(set(event.participants))
            assert event.parent in event.participants
            assert 1 <= min(event.participants) and max(event.participants) <= 60

    def test_extension_order_does_not_matter(self, ctx):
        a = new_event_log(ctx, 40, seed=9)
        a.extend(-3.0, 2.0)
        b = new_event_log(ctx, 40, seed=9)
        b.extend(0.0, 2.0).extend(-1.0, 2.0).extend(-3.0, 2.0)
        same_arrays(a, b)

    def test_seed_changes_events(self, ctx):
        a = new_event_log(ctx, 40, seed=1).extend(-2.0, 0.0)
        b = new_event_log(ctx, 40, seed=2).extend(-2.0, 0.0)
        assert not np.array_equal(a.arrays()[0], b.arrays()[0])

    def test_window_cannot_shrink(self, log):
        log.extend(-2.0, 1.0)
        with pytest.raises(WindowShrinkError):
            log.extend(-1.0, 1.0)
        with pytest.raises(WindowShrinkError):
            log.extend(-2.0, 0.5)

    def test_event_rate(self, ctx):
        n = 30
        log = new_event_log(ctx, n, seed=3).extend(-400.0, 0.0)
        assert len(log) / 400.0 == pytest.approx(ctx.total_rate(n), rel=0.05)

    def test_event_counts_are_poisson(self, ctx):
        n, width, windows = 30, 0.2, 500
        log = new_event_log(ctx, n, seed=17).extend(-width * windows, 0.0)
        times = log.arrays()[0]
        counts, _ = np.histogram(times, bins=np.linspace(-width * windows, 0.0, windows + 1))
        assert counts.mean() == pytest.approx(ctx.total_rate(n) * width, rel=0.03)
        # index of dispersion of a Poisson count is 1, sd sqrt(2 / (windows - 1))
        assert counts.var(ddof=1) / counts.mean() == pytest.approx(1.0, abs=0.25)

    def test_labels_are_exchangeable(self, ctx):
        n = 20
        log = new_event_log(ctx, n, seed=29).extend(-300.0, 0.0)
        _, _, labels, parents = log.arrays()
        uniform = [1.0 / n] * n
        participation = chi_squared_gof(np.bincount(labels, minlength=n + 1)[1:], uniform)
        parenthood = chi_squared_gof(np.bincount(parents, minlength=n + 1)[1:], uniform)
        assert participation.passed, participation.meta
        assert parenthood.passed, parenthood.meta

    def test_population_size_domain(self, ctx):
        with pytest.raises(DomainError):
            EventLog(ctx, 1, seed=0)

    def test_event_needs_parent_among_participants(self):
        with pytest.raises(DomainError):
            PopulationEvent(0.5, (1, 2), 3)
        with pytest.raises(DomainError):
            PopulationEvent(0.5, (1,), 1)


class TestAgreementWithChain:

    def test_tree_at_a_query_time_has_the_chain_law(self, ctx):
        n, replicates = 20, 600
        rng = np.random.default_rng(808)
        chain = [sample_block_path(ctx, n, rng, with_times=True) for _ in range(replicates)]
        trees = [extract_tree(new_event_log(ctx, n, seed=10_000 + i), 0.0).path for i in range(replicates)]
        for name, functional in (('tau', functional_tau), ('length', functional_total_length)):
            report = ks_two_sample(
                SampleSet(np.array([functional(p) for p in chain], dtype=np.float64), {'sampler': 'chain'}),
                SampleSet(np.array([functional(p) for p in trees], dtype=np.float64), {'sampler': 'evolving'}),
                significance=1e-3,
            )
            assert report.passed, (name, report.statistic, report.threshold)


class TestExtraction:

    def test_complete_trace(self, log):
        trace = extract_tree(log, 0.0)
        assert trace.complete
        assert trace.block_counts[-1] == 1
        assert np.all(np.diff(trace.block_counts) < 0)
        assert np.all(np.diff(trace.merger_depths) > 0.0)
        assert np.all(np.isfinite(trace.external_depths))
        path = trace.path
        assert path.blocks[0] == 60 and path.blocks[-1] == 1
        assert path.depth == pytest.approx(trace.merger_depths[-1])
        assert trace.external_length == pytest.approx(float(np.dot(path.singletons[:-1], path.holding_times)))

    def test_block_count_at(self, log):
        trace = extract_tree(log, 0.0)
        assert trace.block_count_at(0.0) == 60
        assert trace.block_count_at(trace.merger_depths[-1]) == 1
        with pytest.raises(DomainError):
            trace.block_count_at(-1.0)

    def test_extraction_is_read_only(self, log):
        first = extract_tree(log, 0.0)
        again = extract_tree(log, 0.0)
        np.testing.assert_array_equal(first.merger_depths, again.merger_depths)

    def test_partial_trace(self, ctx):
        log = new_event_log(ctx, 500, seed=77)
        trace = extract_tree(log, 0.0, max_depth=0.01)
        assert not trace.complete
        assert trace.block_count_at(0.01) > 1
        with pytest.raises(DomainError):
            trace.path

    def test_query_outside_window_extends_it(self, log):
        extract_tree(log, 3.0)
        assert log.window[1] >= 3.0

    def test_neighbouring_trees_share_ancestry(self, ctx):
        log = new_event_log(ctx, 80, seed=5)
        a = extract_tree(log, 0.0)
        b = extract_tree(log, 1e-9)
        np.testing.assert_allclose(a.merger_depths + 1e-9, b.merger_depths, atol=1e-12)

    def test_functional_series(self, ctx):
        log = new_event_log(ctx, 50, seed=8)
        f = FunctionalSpec.parse('tau', 1.5)
        series = functional_series(log, [0.0, 0.5, 1.0], f)
        assert series.shape == (3,)
        expected = functional_J(extract_tree(log, 0.0).path, f)
        assert series[0] == pytest.approx(expected)

    @pytest.mark.parametrize('times', [[], [1.0, 0.0], [0.0, 0.0]])
    def test_functional_series_times(self, log, times):
        with pytest.raises(DomainError):
            functional_series(log, times, FunctionalSpec.parse('tau', 1.5))


class TestPersistence:

    def test_binary_replay(self, log):
        extract_tree(log, 0.0)
        restored = decode_binary(encode_binary(log))
        assert restored.frozen
        assert restored.n == log.n and restored.alpha == log.alpha and restored.seed == log.seed
        same_arrays(log, restored)
        np.testing.assert_array_equal(
            extract_tree(restored, 0.0).merger_depths,
            extract_tree(log, 0.0).merger_depths,
        )

    def test_frozen_log_does_not_extend(self, log):
        log.extend(-1.0, 0.0)
        restored = decode_binary(encode_binary(log))
        with pytest.raises(OutOfWindowError):
            restored.extend(-2.0, 0.0)

    def test_frozen_log_too_short(self, ctx):
        log = new_event_log(ctx, 200, seed=12).extend(-1e-4, 0.0)
        restored = decode_binary(encode_binary(log))
        with pytest.raises(OutOfWindowError):
            extract_tree(restored, 0.0)

    def test_json_mirror(self, log):
        log.extend(-1.0, 0.0)
        payload = json.loads(json.dumps(log_to_dict(log)))
        same_arrays(log, log_from_dict(payload))

    def test_files(self, log, tmp_path):
        extract_tree(log, 0.0)
        path = tmp_path / 'event_log.ebcl'
        digest = write_event_log(log, path)
        assert len(digest) == 64
        assert path.with_suffix('.json').exists()
        same_arrays(read_event_log(path), read_event_log(path.with_suffix('.json')))
        # identical logs give identical bytes
        again = tmp_path / 'again.ebcl'
        assert write_event_log(decode_binary(path.read_bytes()), again) == digest

    def test_bad_magic(self, log):
        data = bytearray(encode_binary(log))
        data[:4] = b'NOPE'
        with pytest.raises(LogFormatError):
            decode_binary(bytes(data))

    def test_bad_version(self, log):
        data = bytearray(encode_binary(log))
        struct.pack_into('<I', data, 4, 99)
        with pytest.raises(LogFormatError):
            decode_binary(bytes(data))

    def test_truncated(self, log):
        log.extend(-1.0, 0.0)
        data = encode_binary(log)
        with pytest.raises(LogCorruptedError):
            decode_binary(data[:-3])
        with pytest.raises(LogCorruptedError):
            decode_binary(data[:HEADER.size - 1])

    def test_trailing_bytes(self, log):
        log.extend(-1.0, 0.0)
        with pytest.raises(LogCorruptedError):
            decode_binary(encode_binary(log) + b'\x00')

    def test_invalid_participants(self, log):
        log.extend(-1.0, 0.0)
        data = bytearray(encode_binary(log))
        # first record: length u32, time f64, k u32, parent u32; point the parent outside the set
        struct.pack_into('<I', data, HEADER.size + 16, 10_000)
        with pytest.raises(LogCorruptedError):
            decode_binary(bytes(data))

    def test_json_bad_magic(self, log):
        payload = log_to_dict(log)
        payload['magic'] = 'XXXX'
        with pytest.raises(LogFormatError):
            log_from_dict(payload)
