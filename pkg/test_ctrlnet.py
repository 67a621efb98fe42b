import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from config import SimulationParameters
from control import LocalSurface, MeasurementPolicy, enumerate_sweep, group_sweep
from ctrlnet import (
    Ack,
    Error,
    Hello,
    InProcessTransport,
    PanelState,
    RssiFeedback,
    SetLength,
    decode,
    decode_envelope,
    encode,
    encode_envelope,
    make_transport,
    panel_loop,
    replay_capture,
    run_distributed,
)
from errors import DecodeError, DomainError, FeedbackTimeout
from experiments import ExperimentSpec, run_experiment
from conftest import small_scene

names = st.text(alphabet=st.characters(blacklist_categories=('Cs',)), min_size=1, max_size=20)


# ---------------------------------------------------------------------------
# Codec

def test_set_length_wire_format():
    assert encode(SetLength(1, 3, 65, 42)) == b"SetLength panel_id=1 roll_id=3 target_mm=65 epoch=42\n"


def test_envelope_carries_routing():
    data = encode_envelope('server', 'controller0', Ack(1, 3, 42, 65))
    envelope = decode_envelope(data)
    assert (envelope.src, envelope.dst) == ('server', 'controller0')
    assert envelope.message == Ack(1, 3, 42, 65)


def test_truncated_record():
    with pytest.raises(DecodeError) as excinfo:
        decode(b"Ack panel_id=1 roll_id=3")
    assert excinfo.value.offset == len(b"Ack panel_id=1 roll_id=3")


def test_unknown_fields_are_ignored():
    assert decode(b"Hello node_id=panel0 role=panel firmware=2\n") == Hello('panel0', 'panel')


@pytest.mark.parametrize('data', [
    b"Ack panel_id=1 roll_id=3 epoch=4\n",
    b"Launch rockets=1\n",
    b"SetLength panel_id=one roll_id=3 target_mm=65 epoch=1\n",
    "Hello node_id=pé role=panel\n".encode('utf-8'),
    b"Hello node_id\n",
])
def test_malformed_records(data):
    with pytest.raises(DecodeError):
        decode(data)


def test_unknown_kind_points_at_start():
    with pytest.raises(DecodeError) as excinfo:
        decode(b"Launch rockets=1\n")
    assert excinfo.value.offset == 0


@settings(max_examples=1000)
@given(names, st.floats(allow_nan=False, allow_infinity=False), st.integers(0, 2**40), st.integers(0, 2**40))
def test_feedback_survives_the_wire(link_id, value, epoch, seq):
    msg = RssiFeedback(link_id, value, epoch, seq)
    assert decode(encode(msg)) == msg


@settings(max_examples=1000)
@given(names, names)
def test_hello_survives_the_wire(node_id, role):
    assert decode(encode(Hello(node_id, role))) == Hello(node_id, role)


def test_error_detail_with_spaces():
    msg = Error('bounds', "roll 3 target 200 mm outside [10, 160] mm")
    assert decode(encode(msg)) == msg


# ---------------------------------------------------------------------------
# Panel behaviour

@pytest.fixture
def panel():
    return PanelState.for_panel(small_scene(), 0)


def test_panel_applies_and_acknowledges(panel):
    replies = panel_loop(panel, [SetLength(0, 1, 65, 1)])
    assert replies == [Ack(0, 1, 1, 65)]
    assert panel.lengths[1] == 0.065
    assert panel.log.move_count == 1


def test_duplicate_command_is_acknowledged_without_moving(panel):
    panel_loop(panel, [SetLength(0, 1, 65, 1)])
    replies = panel_loop(panel, [SetLength(0, 1, 65, 1)])
    assert replies == [Ack(0, 1, 1, 65)]
    assert panel.log.move_count == 1


def test_panel_remembers_one_epoch_per_roll(panel):
    for epoch in range(1, 201):
        panel_loop(panel, [SetLength(0, epoch % 3, 50 + epoch % 2 * 10, epoch)])
    assert len(panel.applied) <= len(panel.lengths)
    assert panel.applied[200 % 3] == 200
    assert panel_loop(panel, [SetLength(0, 200 % 3, 50, 200)]) == [Ack(0, 200 % 3, 200, 50)]
    assert panel.log.move_count == 200


def test_stale_epoch_is_refused(panel):
    panel_loop(panel, [SetLength(0, 1, 65, 3)])
    [reply] = panel_loop(panel, [SetLength(0, 2, 70, 2)])
    assert isinstance(reply, Error) and reply.code == 'stale'
    assert panel.lengths[2] == 0.01


def test_out_of_bounds_and_unknown_rolls(panel):
    replies = panel_loop(panel, [SetLength(0, 2, 200, 1), SetLength(0, 7, 50, 1), Hello('x', 'panel')])
    assert [r.code for r in replies] == ['bounds', 'unknown-roll']
    assert panel.log.move_count == 0


# ---------------------------------------------------------------------------
# Transports

@pytest.mark.parametrize('kind', ['inproc', 'socket'])
@pytest.mark.parametrize('algorithm, sweep', [('enumerate', enumerate_sweep), ('group', group_sweep)])
def test_distributed_run_matches_in_process(kind, algorithm, sweep):
    scene = small_scene((2.412e9, 5.21e9), seed=3)
    policy = MeasurementPolicy()
    local_driver = LocalSurface(scene, scene.links, policy, seed=3)
    local_config, local_log = sweep(scene.links, scene, policy, seed=3, driver=local_driver)

    config, log = run_distributed(scene, scene.links, algorithm, make_transport(kind, seed=3), policy, seed=3)
    assert dict(config.lengths) == dict(local_config.lengths)
    assert log.elapsed_s == local_log.elapsed_s
    assert log.travel == local_log.travel


@pytest.mark.slow
def test_socket_run_writes_identical_csv(tmp_path):
    outputs = {}
    for kind in ('inproc', 'socket'):
        spec = ExperimentSpec('concurrent-links', trials=10, seed=7, transport=kind,
                              output_dir=str(tmp_path / kind))
        result = run_experiment(spec, SimulationParameters())
        assert result.errors == []
        outputs[kind] = (result.output_dir / 'gains.csv').read_bytes()
    assert outputs['socket'] == outputs['inproc']


def test_lossy_transport_still_converges(noiseless):
    scene = small_scene(seed=4)
    expected, _ = group_sweep(scene.links, scene, noiseless, seed=4)
    transport = InProcessTransport(loss=0.2, seed=9)
    config, _ = run_distributed(scene, scene.links, 'group', transport, noiseless, seed=4,
                                max_retries=25, retry_floor_s=0.01)
    assert dict(config.lengths) == dict(expected.lengths)
    assert transport.dropped > 0


def test_silent_panel_is_named(noiseless):
    scene = small_scene(seed=4)
    transport = InProcessTransport(loss=0.999, seed=1)
    with pytest.raises(FeedbackTimeout) as excinfo:
        run_distributed(scene, scene.links, 'enumerate', transport, noiseless, seed=4,
                        max_retries=2, retry_floor_s=0.01)
    assert excinfo.value.node_id.startswith('panel')


def test_capture_replays(tmp_path, noiseless):
    scene = small_scene(panels=1, seed=2)
    capture = tmp_path / 'traffic.log'
    run_distributed(scene, scene.links, 'enumerate', make_transport('inproc', capture=capture), noiseless, seed=2)
    envelopes = replay_capture(capture)
    kinds = {type(e.message).__name__ for e in envelopes}
    assert {'Hello', 'SetLength', 'Ack', 'RssiFeedback'} <= kinds
    assert all(e.dst == 'server' for e in envelopes if isinstance(e.message, RssiFeedback))


def test_transport_model_validation():
    with pytest.raises(DomainError):
        make_transport('carrier-pigeon')
    with pytest.raises(DomainError):
        InProcessTransport(loss=1.0)
    with pytest.raises(DomainError):
        InProcessTransport(latency_ms=-1)


def test_unknown_algorithm():
    scene = small_scene()
    with pytest.raises(DomainError):
        run_distributed(scene, scene.links, 'simulated-annealing')
