import itertools

import pytest
from hypothesis import given, settings, strategies as st

from combnet import planner
from combnet.errors import CapacityError, ConfigurationError
from combnet.grid import Channel


def reference_plan():
    pump = Channel(35)
    available = [Channel(i) for i in range(28, 43)]
    exclusions = {Channel(34), Channel(35), Channel(36)}
    return planner.plan_network(4, pump, available, exclusions)


class TestPlanNetwork:
    def test_four_user_allocation_channel_for_channel(self):
        plan = reference_plan()
        expected = {
            ("Alice", "Bob"): (37, 33),
            ("Alice", "Chloe"): (38, 32),
            ("Alice", "Dave"): (39, 31),
            ("Bob", "Chloe"): (40, 30),
            ("Bob", "Dave"): (41, 29),
            ("Chloe", "Dave"): (42, 28),
        }
        got = {
            (e.user_a.label, e.user_b.label): (
                e.signal_channel.index,
                e.idler_channel.index,
            )
            for e in plan.edges
        }
        assert got == expected

    def test_per_user_channel_sets(self):
        plan = reference_plan()
        by_label = {u.label: u for u in plan.users}
        received = {
            label: sorted(c.index for c in plan.channels_of(by_label[label]))
            for label in ("Alice", "Bob", "Chloe", "Dave")
        }
        assert received == {
            "Alice": [37, 38, 39],
            "Bob": [33, 40, 41],
            "Chloe": [30, 32, 42],
            "Dave": [28, 29, 31],
        }

    def test_two_user_network(self):
        plan = planner.plan_network(
            2, Channel(35), [Channel(i) for i in range(30, 41)],
            {Channel(34), Channel(35), Channel(36)},
        )
        assert len(plan.edges) == 1
        e = plan.edges[0]
        assert (e.signal_channel.index, e.idler_channel.index) == (37, 33)

    def test_capacity_error_names_shortfall(self):
        available = [Channel(i) for i in range(31, 40)]  # not enough pairs
        with pytest.raises(CapacityError, match="short"):
            planner.plan_network(
                4, Channel(35), available, {Channel(34), Channel(35), Channel(36)}
            )

    def test_pump_in_usable_set_rejected(self):
        with pytest.raises(ConfigurationError, match="pump"):
            planner.plan_network(
                2, Channel(35), [Channel(i) for i in range(33, 38)], set()
            )

    def test_channel_count_law(self):
        for n in (2, 3, 4):
            plan = planner.plan_network(
                n,
                Channel(35),
                [Channel(i) for i in range(20, 51)],
                {Channel(34), Channel(35), Channel(36)},
            )
            channels = plan.all_channels()
            assert len(channels) == n * (n - 1)
            assert len(set(channels)) == n * (n - 1)
            for e in plan.edges:
                assert e.signal_channel.index + e.idler_channel.index == 70


class TestMaxUsers:
    @pytest.mark.parametrize("count,expected", [(44, 7), (12, 4), (2, 2), (6, 3)])
    def test_values(self, count, expected):
        assert planner.max_users(count) == expected

    @given(st.integers(min_value=2, max_value=10_000))
    def test_law(self, count):
        n = planner.max_users(count)
        assert n * (n - 1) <= count
        assert (n + 1) * n > count


class TestDelays:
    def test_offsets_separated_at_base_step_10(self):
        plan = reference_plan()
        schedule = planner.assign_delays(plan, 10.0, 2.5)
        self._assert_identifiable(plan, schedule, 2.5)

    def test_offsets_separated_at_base_step_5(self):
        plan = reference_plan()
        schedule = planner.assign_delays(plan, 5.0, 2.5)
        self._assert_identifiable(plan, schedule, 2.5)

    def test_two_user_plan_trivially_unique(self):
        plan = planner.plan_network(
            2, Channel(35), [Channel(33), Channel(37)], set()
        )
        schedule = planner.assign_delays(plan, 10.0, 2.5)
        assert planner.verify_plan(plan, schedule) == []

    def test_base_step_must_cover_window(self):
        with pytest.raises(ConfigurationError):
            planner.assign_delays(reference_plan(), 4.0, 2.5)

    @staticmethod
    def _assert_identifiable(plan, schedule, window):
        # exhaustive pairwise check per user
        for user in plan.users:
            offsets = [
                schedule.edge_offset_ns(e) for e in plan.edges_of(user)
            ]
            for a, b in itertools.combinations(offsets, 2):
                assert abs(a - b) >= window

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(min_value=2, max_value=5),
        st.floats(min_value=5.0, max_value=20.0),
    )
    def test_greedy_always_satisfies_invariant(self, n_users, base_step):
        plan = planner.plan_network(
            n_users,
            Channel(35),
            [Channel(i) for i in range(10, 61)],
            {Channel(34), Channel(35), Channel(36)},
        )
        schedule = planner.assign_delays(plan, base_step, 2.5)
        assert planner.verify_plan(plan, schedule) == []


class TestVerifyPlan:
    def test_consistent_plan_passes(self):
        plan = reference_plan()
        schedule = planner.assign_delays(plan, 10.0, 2.5)
        assert planner.verify_plan(plan, schedule) == []

    def test_channel_reuse_detected(self):
        plan = reference_plan()
        bad_edges = list(plan.edges)
        e = bad_edges[1]
        bad_edges[1] = planner.EdgeAssignment(
            e.user_a, e.user_b, Channel(37), Channel(33)
        )
        bad = planner.NetworkPlan(
            plan.users, bad_edges, plan.pump, plan.excluded_channels
        )
        problems = planner.verify_plan(bad)
        assert "channel reuse: CH37" in problems
        assert "channel reuse: CH33" in problems

    def test_colliding_delays_flag_ambiguous_user(self):
        plan = reference_plan()
        delays = {c: 0.0 for c in plan.all_channels()}
        schedule = planner.DelaySchedule(delays, identification_window_ns=2.5)
        problems = planner.verify_plan(plan, schedule)
        assert "ambiguous arrival signature for user Alice" in problems

    def test_nonconjugate_edge_detected(self):
        plan = reference_plan()
        bad_edges = list(plan.edges)
        e = bad_edges[0]
        bad_edges[0] = planner.EdgeAssignment(
            e.user_a, e.user_b, Channel(38), Channel(33)
        )
        bad = planner.NetworkPlan(
            plan.users, bad_edges, plan.pump, plan.excluded_channels
        )
        assert any("not conjugate" in p for p in planner.verify_plan(bad))


class TestSerialization:
    def test_json_round_trip(self):
        plan = reference_plan()
        schedule = planner.assign_delays(plan, 10.0, 2.5)
        doc = planner.plan_to_dict(plan, schedule)
        plan2, schedule2 = planner.plan_from_dict(doc)
        assert plan2 == plan
        assert schedule2 == schedule

    def test_allocation_table_lists_channel_pairs(self):
        table = planner.format_allocation_table(reference_plan())
        assert "Alice & Bob" in table
        assert "CH37-CH33" in table
        assert "CH42-CH28" in table
