import math

import pytest

from aqmsim.aqm import PfifoQdisc, QdiscConfig
from aqmsim.cca import make_cca
from aqmsim.cca.bbr import PROBE_RTT, PROBE_UP, STARTUP, TUNABLES, WindowedMax
from aqmsim.engine import Engine, millis, seconds
from aqmsim.netpath import MSS_BYTES
from aqmsim.transport import RateSample


class _FlowStub:
    def __init__(self):
        self.delivered = 0
        self.inflight = 0
        self.app_limited = False


def sample(rate_bps=10e6, rtt_ms=10.0, newly=MSS_BYTES, prior_delivered=0):
    return RateSample(delivery_rate_bps=rate_bps, rtt_ns=millis(rtt_ms),
                      newly_acked=newly, prior_delivered=prior_delivered)


class TestWindowedMax:
    def test_tracks_max_within_window(self):
        f = WindowedMax(10)
        f.update(0, 5.0)
        f.update(1, 3.0)
        assert f.value == 5.0
        f.update(2, 7.0)
        assert f.value == 7.0

    def test_old_max_expires(self):
        f = WindowedMax(10)
        f.update(0, 9.0)
        for tick in range(1, 11):
            f.update(tick, 1.0)
        assert f.value == 1.0

    def test_max_retained_while_in_window(self):
        f = WindowedMax(10)
        f.update(0, 9.0)
        for tick in range(1, 10):
            f.update(tick, 1.0)
        assert f.value == 9.0


class TestTunables:
    def test_version_table_values(self):
        assert TUNABLES[1].startup_pacing_gain == 2.885
        assert TUNABLES[3].startup_pacing_gain == 2.77
        assert TUNABLES[3].startup_cwnd_gain == 2.0
        assert TUNABLES[3].probe_down_gain == 0.90
        assert TUNABLES[2].probe_down_gain == 0.75
        assert TUNABLES[3].headroom == 0.85
        for v in (1, 2, 3):
            assert TUNABLES[v].loss_thresh == 0.02
            assert TUNABLES[v].beta == 0.7
            assert TUNABLES[v].min_cwnd_segments == 4
        # v3 re-probes sooner than v2
        assert TUNABLES[3].probe_wait_base_s < TUNABLES[2].probe_wait_base_s

    def test_v1_gain_cycle_shape(self):
        from aqmsim.cca.bbr import V1_GAIN_CYCLE
        assert V1_GAIN_CYCLE == (1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        assert len(V1_GAIN_CYCLE) == 8


class TestLossClampThreshold:
    """Scripted loss injection: the inflight_hi clamp fires above the 2%
    per-round loss rate and not below."""

    def drive_round(self, cca, flow, lost_segments, delivered_segments, now):
        # deliver a round's worth of acks, then losses, then close the round
        for i in range(delivered_segments):
            flow.delivered += MSS_BYTES
            cca.on_ack(flow, sample(prior_delivered=0, newly=MSS_BYTES), now)
            now += millis(1)
        for _ in range(lost_segments):
            cca.on_loss(flow, "dupack", MSS_BYTES, now)
        # next ack starts a new round: prior_delivered >= marker
        flow.delivered += MSS_BYTES
        cca.on_ack(flow, sample(prior_delivered=flow.delivered, newly=MSS_BYTES), now)
        return now + millis(1)

    def make(self, version):
        cca = make_cca(version)
        flow = _FlowStub()
        flow.inflight = 20 * MSS_BYTES
        # place the machine in the probing state where the ceiling reacts,
        # and pin the phase clock so the scripted round stays inside it
        cca.filled_pipe = True
        cca.state = PROBE_UP
        cca.min_rtt_ns = millis(10)
        cca._cycle_stamp = seconds(10_000)
        return cca, flow

    def test_clamp_fires_at_five_percent(self):
        cca, flow = self.make("bbr3")
        assert not math.isfinite(cca.inflight_hi)
        self.drive_round(cca, flow, lost_segments=5, delivered_segments=95, now=millis(1))
        assert math.isfinite(cca.inflight_hi)
        assert cca.inflight_hi >= 4 * MSS_BYTES

    def test_no_clamp_at_one_percent(self):
        cca, flow = self.make("bbr3")
        self.drive_round(cca, flow, lost_segments=1, delivered_segments=99, now=millis(1))
        assert not math.isfinite(cca.inflight_hi)

    def test_v1_ignores_loss(self):
        cca = make_cca("bbr1")
        flow = _FlowStub()
        flow.inflight = 20 * MSS_BYTES
        rate_before = cca.pacing_rate_bps
        cwnd_before = cca.cwnd
        cca.on_loss(flow, "dupack", MSS_BYTES, now=millis(5))
        assert cca.pacing_rate_bps == rate_before
        assert cca.cwnd == cwnd_before


class TestIntegratedBehavior:
    """End-to-end single-flow checks on a clean 10 Mbps / 10 ms path."""

    def run_solo(self, cca_name, duration_s=15.0):
        from aqmsim.scenario import get_preset
        from aqmsim.harness import Simulation
        cfg = get_preset(f"{cca_name}-solo")
        cfg.duration_s = duration_s
        sim = Simulation(cfg)
        states = []
        sender = sim.senders[cca_name]
        cca = sender.cca
        orig = cca.on_ack

        def wrapped(flow, rs, now):
            orig(flow, rs, now)
            states.append((now, cca.state, cca.cwnd, flow.inflight,
                           cca.btl_bw_bps, cca.min_rtt_ns, cca.pacing_gain))

        cca.on_ack = wrapped
        samples = sim.run()
        return sim, states, samples

    @pytest.mark.parametrize("version", ["bbr1", "bbr2", "bbr3"])
    def test_btl_bw_converges_within_3s(self, version):
        sim, states, _ = self.run_solo(version, duration_s=5.0)
        late = [s for s in states if s[0] > seconds(3)]
        for s in late:
            assert abs(s[4] - 10e6) / 10e6 < 0.05

    @pytest.mark.parametrize("version", ["bbr1", "bbr2", "bbr3"])
    def test_btl_bw_never_exceeds_probe_bound(self, version):
        sim, states, _ = self.run_solo(version, duration_s=10.0)
        for s in states:
            assert 0 <= s[4] <= 10e6 * 1.3

    @pytest.mark.parametrize("version", ["bbr1", "bbr2", "bbr3"])
    def test_min_rtt_filter_below_every_current_sample(self, version):
        from aqmsim.scenario import get_preset
        from aqmsim.harness import Simulation
        cfg = get_preset(f"{version}-solo")
        cfg.duration_s = 8.0
        sim = Simulation(cfg)
        sender = sim.senders[version]
        cca = sender.cca
        violations = []
        orig = cca.on_ack

        def wrapped(flow, rs, now):
            orig(flow, rs, now)
            if rs.rtt_ns is not None and cca.min_rtt_ns is not None:
                if cca.min_rtt_ns > rs.rtt_ns:
                    violations.append((now, cca.min_rtt_ns, rs.rtt_ns))

        cca.on_ack = wrapped
        sim.run()
        assert violations == []

    def test_probe_rtt_liveness_and_cwnd_floor(self):
        # v1 keeps a 4-segment ProbeRTT floor and re-enters within 10.5 s
        sim, states, _ = self.run_solo("bbr1", duration_s=25.0)
        probe_rtt_times = [s[0] for s in states if s[1] == PROBE_RTT]
        assert probe_rtt_times, "ProbeRTT never entered"
        first = min(probe_rtt_times)
        assert first <= seconds(10.5) + seconds(1.0)
        later = [t for t in probe_rtt_times if t > first + seconds(1)]
        assert later, "ProbeRTT never re-entered"
        assert min(later) - first <= seconds(10.5) + millis(500)
        # cwnd floor during ProbeRTT
        for s in states:
            if s[1] == PROBE_RTT:
                assert s[2] >= 4 * MSS_BYTES

    def test_unity_gain_cruise_paces_at_estimate(self):
        sim, states, _ = self.run_solo("bbr3", duration_s=10.0)
        sender = sim.senders["bbr3"]
        cca = sender.cca
        cruise = [s for s in states if s[1] == "probe_bw_cruise" and s[0] > seconds(3)]
        assert cruise
        for s in cruise:
            assert s[6] == 1.0   # pacing gain in cruise
        assert abs(cca.pacing_rate_bps / cca.btl_bw_bps - 1.0) < 0.26
