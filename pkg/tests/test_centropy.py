"""Tests for the computational-entropy certificates.

Frozen oracle values (independent implementations, run before the
module was written):
  Helstrom guessing of {|0>, |+>} at equal priors:
      p* = 0.8535533905932737 (= cos^2(pi/8) = (2+sqrt2)/4),
      k* = -log2 p* = 0.22844669683638807
  capped-LP instance A (rho .6/.3/.1, sigma .5/.3/.2, lam .5,
      Pi diag(1,.4,0)): target 0.72,
      interval [0.46259884629822384, 0.8242640687119286]
  capped-LP instance B (rho .9/.1/0, sigma .2/.3/.5, lam .5,
      Pi diag(1,0,0)): interval [0.0, 0.28284271247461906],
      refusal margin 0.617157287525381
  mirrored closed form (Pi [[.9,.2],[.2,.1]], rho diag(.7,.3), lam 1):
      Pi eigenvalues 0.052786404500042065 / 0.947213595499958,
      achievable [0.356393202250021, 0.803606797749979];
      sigma diag(.95,.05) target 0.86, margin 0.056393202250021
  stall instance (rho diag(.8,.1,.1), sigma I/3, 2^lam = 1.5,
      members diag(1,1,0)/diag(1,0,1), eps .05): each member interval
      [0.5, 1.0] contains the target 0.9 +- eps, but the joint linear
      program is infeasible (any feasible point needs a diagonal entry
      at least 0.7 above the cap 0.5)
  uniform-cap intervals for the diag(.4,.3,.2,.1) instance, members
      diag(1,.8,.2,0)/diag(.1,.9,.3,.7)/diag(.5,0,1,.5):
      c=0.5 -> [0.1,0.9]/[0.2,0.8]/[0.25,0.75], targets .68/.44/.45;
      c=0.25 -> all collapse to the point 0.5
      verdicts: k=1 eps=.05 true, k=2 eps=.05 false (first member),
      k=2 eps=.3 true
  sign state m=3 from default_rng(20260817): signs
      [-1,-1,1,1,1,1,-1,-1]; over the next 20 seeded random effects
      max |<Pi, psi><psi|> - tr Pi / 8| = 0.21246099350543557,
      attained by member 15
  game experiment on |0><0| at d=4, k=2, eps=delta=0.1:
      universal gap exactly 0.75, rounds ceil(16 ln 4 / 0.05^2) = 8873
"""

import json
import math

import numpy as np
import pytest

from qelab import centropy, qstate, solvers, tomog
from qelab.centropy import (
    DistinguisherFamily,
    EntropyCertificate,
    check_hill1,
    check_hill2,
    check_metric1,
    check_metric2,
    check_pseudo_relative,
    h_guess,
    h_hill_cond,
    h_metric_cond,
    metric_to_hill_experiment,
    reverse_dmt,
)
from qelab.leaksim import DistinguisherFamilyCq
from qelab.qstate import CqState, DensityOperator, StateError, h_min_cond
from qelab.tomog import CapacityError

from .conftest import random_density, random_effect

P_HELSTROM = 0.8535533905932737
K_HELSTROM = 0.22844669683638807

RHO_KET0 = np.array([[1.0, 0.0], [0.0, 0.0]])
RHO_PLUS = np.full((2, 2), 0.5)

RHO_DIAG4 = np.diag([0.4, 0.3, 0.2, 0.1])
FAM_DIAG4 = [np.diag([1.0, 0.8, 0.2, 0.0]),
             np.diag([0.1, 0.9, 0.3, 0.7]),
             np.diag([0.5, 0.0, 1.0, 0.5])]

STALL_RHO = np.diag([0.8, 0.1, 0.1])
STALL_SIGMA = np.eye(3) / 3.0
STALL_LAM = math.log2(1.5)
STALL_FAM = [np.diag([1.0, 1.0, 0.0]), np.diag([1.0, 0.0, 1.0])]


def helstrom_table():
    w, v = np.linalg.eigh(0.5 * (RHO_KET0 - RHO_PLUS))
    pos = v[:, w > 0]
    pi0 = pos @ pos.conj().T
    return {0: pi0, 1: np.eye(2) - pi0}


def bb84():
    return CqState((0, 1), [0.5, 0.5],
                   [DensityOperator(RHO_KET0), DensityOperator(RHO_PLUS)])


def sign_state_instance():
    """Pure sign state on 3 qubits plus 20 seeded random effects,
    reproducing the oracle's generator sequence exactly."""
    gen = np.random.default_rng(20260817)
    signs = gen.choice([-1.0, 1.0], size=8)
    psi = signs / math.sqrt(8.0)
    effects = []
    for _ in range(20):
        g = gen.normal(size=(8, 8)) + 1j * gen.normal(size=(8, 8))
        q, _ = np.linalg.qr(g)
        eig = gen.uniform(size=8)
        effects.append((q * eig[None, :]) @ q.conj().T)
    return signs, np.outer(psi, psi), effects


class TestDistinguisherFamily:
    def test_coercion_and_labels(self):
        fam = DistinguisherFamily([np.eye(2) * 0.5, RHO_KET0])
        assert len(fam) == 2
        assert fam.labels == ("D0", "D1")
        assert fam.dim == 2

    def test_empty_family_is_legal(self):
        fam = DistinguisherFamily(())
        assert len(fam) == 0
        assert fam.dim is None
        assert fam.expectations(np.eye(2) / 2).shape == (0,)

    def test_expectations(self):
        fam = DistinguisherFamily([RHO_KET0, np.eye(2) * 0.5])
        vals = fam.expectations(np.diag([0.7, 0.3]))
        assert np.allclose(vals, [0.7, 0.5], atol=1e-12)

    def test_with_complements(self):
        fam = DistinguisherFamily([RHO_KET0], labels=("P0",))
        aug = fam.with_complements()
        assert aug.labels == ("P0", "P0^c")
        assert np.allclose(aug.effects[1].mat, np.diag([0.0, 1.0]))

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValueError, match="mix dimensions"):
            DistinguisherFamily([np.eye(2) * 0.5, np.eye(3) * 0.5])

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            DistinguisherFamily([RHO_KET0, RHO_PLUS], labels=("a", "a"))

    def test_label_length_mismatch(self):
        with pytest.raises(ValueError, match="differ in length"):
            DistinguisherFamily([RHO_KET0], labels=("a", "b"))

    def test_immutable(self):
        fam = DistinguisherFamily([RHO_KET0])
        with pytest.raises(AttributeError):
            fam.labels = ("x",)

    def test_cq_family_rejected_for_single_system_checks(self):
        famcq = DistinguisherFamilyCq([helstrom_table()])
        with pytest.raises(StateError, match="per-symbol"):
            check_metric1(RHO_KET0, RHO_PLUS, 1.0, famcq, 0.1)


class TestEntropyCertificate:
    def test_all_notions_construct(self):
        for notion in sorted(centropy.NOTIONS):
            cert = EntropyCertificate(notion, 1.0, "at-most", "true")
            assert cert.notion == notion

    def test_gates(self):
        with pytest.raises(ValueError, match="notion"):
            EntropyCertificate("bogus", 1.0, "at-least", "true")
        with pytest.raises(ValueError, match="direction"):
            EntropyCertificate("HILL", 1.0, "upward", "true")
        with pytest.raises(ValueError, match="verdict"):
            EntropyCertificate("HILL", 1.0, "at-least", "maybe")
        with pytest.raises(ValueError, match="witness"):
            EntropyCertificate("HILL", 1.0, "at-least", "true",
                               witness=np.eye(2) / 2)

    def test_immutable(self):
        cert = EntropyCertificate("HILL", 1.0, "at-least", "true")
        with pytest.raises(AttributeError):
            cert.verdict = "false"

    def test_json_round_trip_density_witness(self):
        w = DensityOperator(np.array([[0.6, 0.1j], [-0.1j, 0.4]]))
        cert = EntropyCertificate("HILL", 1.5, "at-least", "true",
                                  witness=w, family_label="D3", eps=0.05)
        back = EntropyCertificate.from_json(cert.to_json())
        assert back.notion == "HILL" and back.bound == 1.5
        assert back.family_label == "D3" and back.eps == 0.05
        assert np.allclose(back.witness.mat, w.mat, atol=1e-15)

    def test_json_witness_matrices_inline(self):
        w = DensityOperator(np.eye(2) / 2)
        payload = json.loads(
            EntropyCertificate("metric", 1.0, "at-least", "true",
                               witness=w).to_json())
        assert payload["witness"]["kind"] == "density"
        assert payload["witness"]["mat"]["re"] == [[0.5, 0.0], [0.0, 0.5]]

    def test_json_round_trip_cq_witness(self):
        cert = EntropyCertificate("rHILL", 0.5, "at-least", "true",
                                  witness=bb84())
        back = EntropyCertificate.from_json(cert.to_json())
        assert back.witness.support == (0, 1)
        for a, b in zip(back.witness.states, bb84().states):
            assert np.allclose(a.mat, b.mat, atol=1e-15)

    def test_json_round_trip_no_witness(self):
        cert = EntropyCertificate("D-pseudo", 2.0, "at-most", "false")
        back = EntropyCertificate.from_json(cert.to_json())
        assert back.witness is None and back.verdict == "false"


class TestPseudoRelative:
    def test_equal_states_any_family(self, rng):
        fam = [random_effect(rng, 3) for _ in range(4)]
        r = random_density(rng, 3)
        assert check_pseudo_relative(r, r, 0.0, fam, 0.0)

    def test_qubit_miniature_frozen(self):
        fam = [RHO_KET0]
        assert not check_pseudo_relative(RHO_KET0, RHO_PLUS, 0.5, fam, 0.1)
        assert check_pseudo_relative(RHO_KET0, RHO_PLUS, 1.0, fam, 0.0)
        assert check_pseudo_relative(RHO_KET0, RHO_PLUS, 1.0, fam, 0.5)
        assert not check_pseudo_relative(RHO_KET0, RHO_PLUS, 0.0, fam, 0.4)

    def test_empty_family_vacuous(self):
        assert check_pseudo_relative(RHO_KET0, RHO_PLUS, -5.0, [], 0.0)


class TestMetricChecks:
    def test_instance_a_feasible_at_zero_eps(self):
        rho = np.diag([0.6, 0.3, 0.1])
        sig = np.diag([0.5, 0.3, 0.2])
        pi = np.diag([1.0, 0.4, 0.0])
        assert check_metric1(rho, sig, 0.5, [pi], 0.0)

    def test_instance_b_frozen_margin(self):
        rho = np.diag([0.9, 0.1, 0.0])
        sig = np.diag([0.2, 0.3, 0.5])
        pi = np.diag([1.0, 0.0, 0.0])
        assert not check_metric1(rho, sig, 0.5, [pi], 0.6)
        assert check_metric1(rho, sig, 0.5, [pi], 0.62)
        lo, hi = centropy._dominated_interval(pi, (2.0 ** 0.5) * sig)
        assert abs(lo - 0.0) < 1e-9
        assert abs(hi - 0.28284271247461906) < 1e-9

    def test_metric1_is_one_sided(self):
        # the target sits far BELOW the achievable interval; the
        # one-sided comparison still passes at eps = 0
        rho = np.diag([0.0, 0.0, 1.0])
        sig = np.diag([0.2, 0.3, 0.5])
        pi = np.diag([1.0, 0.0, 0.0])
        assert check_metric1(rho, sig, 0.5, [pi], 0.0)

    def test_metric2_frozen(self):
        pi = np.array([[0.9, 0.2], [0.2, 0.1]])
        rho = np.diag([0.7, 0.3])
        assert check_metric2(rho, np.diag([0.2, 0.8]), 1.0, [pi], 0.0)
        shifted = np.diag([0.95, 0.05])
        assert not check_metric2(rho, shifted, 1.0, [pi], 0.05)
        assert check_metric2(rho, shifted, 1.0, [pi], 0.057)

    def test_metric2_closed_form_matches_oracle(self):
        pi = np.array([[0.9, 0.2], [0.2, 0.1]])
        w = np.linalg.eigvalsh(pi)
        hi = 0.5 * float(np.trace(pi @ np.diag([0.7, 0.3]))) + 0.5 * w[-1]
        assert abs(hi - 0.803606797749979) < 1e-12

    def test_negative_lambda(self):
        assert not check_metric1(RHO_KET0, RHO_PLUS, -0.5, [RHO_KET0], 0.0)
        assert not check_metric2(RHO_KET0, RHO_PLUS, -0.5, [RHO_KET0], 0.0)
        assert check_metric1(RHO_KET0, RHO_PLUS, -0.5, [], 0.0)

    def test_empty_family_vacuous(self):
        assert check_metric1(RHO_KET0, RHO_PLUS, 1.0, [], 0.0)
        assert check_metric2(RHO_KET0, RHO_PLUS, 1.0, [], 0.0)

    def test_huge_lambda_rejected(self):
        with pytest.raises(ValueError, match="exponent"):
            check_metric1(RHO_KET0, RHO_PLUS, 2000.0, [RHO_KET0], 0.1)


class TestHillChecks:
    def test_rank_one_cap_refused_at_every_lambda(self):
        # the only state under 2^lam |+><+| is |+><+| itself, whose
        # acceptance 1/2 sits 0.5 away from the target 1
        for lam in (0.0, 1.0, 5.0, 20.0):
            ok, w = check_hill1(RHO_KET0, RHO_PLUS, lam, [RHO_KET0], 0.4)
            assert not ok and w is None

    def test_rank_one_cap_interval_is_a_point(self):
        lo, hi = centropy._dominated_interval(RHO_KET0, 4.0 * RHO_PLUS)
        assert abs(lo - 0.5) < 1e-9 and abs(hi - 0.5) < 1e-9

    def test_boundary_domination(self):
        # rho <= 2 sigma holds with equality on one eigenvalue
        ok, w = check_hill1(np.eye(2) / 2, np.diag([0.75, 0.25]), 1.0,
                            [np.diag([1.0, 0.0])], 0.0)
        assert ok
        assert np.allclose(w.mat, np.eye(2) / 2, atol=1e-9)

    def test_hill2_mixes_toward_feasibility(self):
        ok, w = check_hill2(RHO_KET0, RHO_PLUS, 1.0, [RHO_KET0], 0.1)
        assert ok
        # witness dominates rho/2 and stays inside the slab
        assert np.linalg.eigvalsh(w.mat - 0.5 * RHO_KET0)[0] >= -1e-8
        assert abs(np.real(np.trace(RHO_KET0 @ w.mat)) - 0.5) <= 0.1 + 1e-6

    def test_hill2_lambda_zero_exact(self):
        ok, w = check_hill2(RHO_KET0, RHO_PLUS, 0.0, [RHO_KET0], 0.6)
        assert ok and np.allclose(w.mat, RHO_KET0)
        ok, w = check_hill2(RHO_KET0, RHO_PLUS, 0.0, [RHO_KET0], 0.4)
        assert not ok and w is None

    def test_negative_lambda(self):
        assert check_hill1(RHO_KET0, RHO_PLUS, -0.1, [], 0.1) == (False, None)
        assert check_hill2(RHO_KET0, RHO_PLUS, -0.1, [], 0.1) == (False, None)

    def test_empty_family_feasible_with_witness(self):
        ok, w = check_hill1(RHO_KET0, RHO_PLUS, 1.0, [], 0.0)
        assert ok and isinstance(w, DensityOperator)

    def test_stall_raises_undetermined(self):
        with pytest.raises(solvers.SolverError, match="undetermined"):
            check_hill1(STALL_RHO, STALL_SIGMA, STALL_LAM, STALL_FAM, 0.05)
        try:
            check_hill1(STALL_RHO, STALL_SIGMA, STALL_LAM, STALL_FAM, 0.05)
        except solvers.SolverError as err:
            assert err.residuals["feasible"] is False

    def test_stall_members_pass_alone(self):
        # the same instance is feasible for each member separately,
        # which is why the refusal scan cannot certify it false
        for pi in STALL_FAM:
            ok, _ = check_hill1(STALL_RHO, STALL_SIGMA, STALL_LAM, [pi], 0.05)
            assert ok

    def test_witness_invariant_random(self, rng):
        for _ in range(8):
            d = int(rng.integers(2, 5))
            r = random_density(rng, d)
            s = random_density(rng, d)
            lam = max(0.0, float(qstate.d_infinity(r, s))) + 0.05
            effs = [random_effect(rng, d) for _ in range(3)]
            ok, w = check_hill1(r, s, lam, effs, 0.02)
            assert ok
            cap = (2.0 ** lam) * s
            assert np.linalg.eigvalsh(cap - w.mat)[0] >= -1e-6
            fam = DistinguisherFamily(effs)
            drift = np.abs(fam.expectations(w.mat) - fam.expectations(r))
            assert float(np.max(drift)) <= 0.02 + 1e-6

    def test_accepts_density_operator_inputs(self):
        ok, _ = check_hill1(DensityOperator(np.eye(2) / 2),
                            DensityOperator(np.diag([0.75, 0.25])),
                            1.0, [np.diag([1.0, 0.0])], 0.0)
        assert ok


class TestHMetricCond:
    @pytest.mark.parametrize("k,eps,want,label", [
        (1.0, 0.05, "true", None),
        (2.0, 0.05, "false", "D0"),
        (2.0, 0.3, "true", None),
    ])
    def test_diag_verdicts_frozen(self, k, eps, want, label):
        cert = h_metric_cond(RHO_DIAG4, k, FAM_DIAG4, eps)
        assert cert.verdict == want
        assert cert.family_label == label
        assert cert.notion == "metric" and cert.direction == "at-least"

    def test_unicap_intervals_frozen(self):
        ints = [centropy._unicap_interval(pi, 0.5) for pi in FAM_DIAG4]
        assert np.allclose(ints, [(0.1, 0.9), (0.2, 0.8), (0.25, 0.75)],
                           atol=1e-12)
        for pi in FAM_DIAG4:
            lo, hi = centropy._unicap_interval(pi, 0.25)
            assert abs(lo - 0.5) < 1e-12 and abs(hi - 0.5) < 1e-12

    def test_floor_above_dimension_is_false(self):
        cert = h_metric_cond(RHO_DIAG4, 3.0, FAM_DIAG4, 0.5)
        assert cert.verdict == "false" and cert.family_label is None

    def test_empty_family_vacuous_true(self):
        assert h_metric_cond(RHO_DIAG4, 1.0, [], 0.0).verdict == "true"

    def test_relaxed_flag_sets_notion(self):
        cert = h_metric_cond(RHO_DIAG4, 1.0, FAM_DIAG4, 0.05, relaxed=True)
        assert cert.notion == "metric-rlx" and cert.verdict == "true"

    def test_cq_per_member_verdicts(self):
        fam = DistinguisherFamilyCq([helstrom_table()])
        assert h_metric_cond(bb84(), 0.25, fam, 0.2).verdict == "true"
        cert = h_metric_cond(bb84(), 1.0, fam, 0.2)
        assert cert.verdict == "false" and cert.family_label == "D0"

    def test_stall_instance_stays_true_per_member(self):
        # each member alone is feasible, so the member-by-member notion
        # holds even though the joint search below cannot conclude
        cert = h_metric_cond(STALL_RHO, 1.0, STALL_FAM, 0.05)
        assert cert.verdict == "true"


class TestHHillCond:
    @pytest.mark.parametrize("k,eps,want,label", [
        (1.0, 0.05, "true", None),
        (2.0, 0.05, "false", "D0"),
        (2.0, 0.3, "true", None),
    ])
    def test_diag_verdicts_frozen(self, k, eps, want, label):
        cert = h_hill_cond(RHO_DIAG4, k, FAM_DIAG4, eps)
        assert cert.verdict == want and cert.family_label == label
        if want == "true":
            w = cert.witness
            assert float(np.linalg.eigvalsh(w.mat)[-1]) <= 2.0 ** -k + 1e-6
            fam = DistinguisherFamily(FAM_DIAG4)
            drift = np.abs(fam.expectations(w.mat)
                           - fam.expectations(RHO_DIAG4))
            assert float(np.max(drift)) <= eps + 1e-6

    def test_source_is_its_own_witness(self):
        cert = h_hill_cond(RHO_DIAG4, 1.0, FAM_DIAG4, 0.05)
        assert np.allclose(cert.witness.mat, RHO_DIAG4, atol=1e-9)

    def test_forced_uniform_witness(self):
        # c d = 1 leaves only the maximally mixed state at the floor
        cert = h_hill_cond(RHO_DIAG4, 2.0, FAM_DIAG4, 0.3)
        assert np.allclose(cert.witness.mat, np.eye(4) / 4, atol=1e-9)

    def test_floor_above_dimension_is_false(self):
        assert h_hill_cond(RHO_DIAG4, 3.0, FAM_DIAG4, 0.5).verdict == "false"

    def test_empty_family_true_with_witness(self):
        cert = h_hill_cond(RHO_DIAG4, 2.0, [], 0.0)
        assert cert.verdict == "true"
        assert float(np.linalg.eigvalsh(cert.witness.mat)[-1]) <= 0.25 + 1e-9

    def test_undetermined_on_stall(self):
        cert = h_hill_cond(STALL_RHO, 1.0, STALL_FAM, 0.05)
        assert cert.verdict == "undetermined"
        assert cert.witness is None

    def test_sign_state_certified_despite_zero_min_entropy(self):
        signs, rho_psi, effects = sign_state_instance()
        assert signs.astype(int).tolist() == [-1, -1, 1, 1, 1, 1, -1, -1]
        fam = DistinguisherFamily(effects)
        dev = np.abs(fam.expectations(rho_psi)
                     - fam.expectations(np.eye(8) / 8))
        assert abs(float(np.max(dev)) - 0.21246099350543557) < 1e-12
        assert int(np.argmax(dev)) == 15
        # pure state: genuine min-entropy is zero, yet the family
        # cannot tell it from the maximally mixed state at eps = 0.25
        cert = h_hill_cond(rho_psi, 3.0, effects, 0.25)
        assert cert.verdict == "true"
        assert np.allclose(cert.witness.mat, np.eye(8) / 8, atol=1e-7)
        tight = h_hill_cond(rho_psi, 3.0, effects, 0.20)
        assert tight.verdict == "false" and tight.family_label == "D15"

    def test_cq_false_by_outer_bound(self):
        fam = DistinguisherFamilyCq([helstrom_table()])
        cert = h_hill_cond(bb84(), 1.0, fam, 0.2)
        assert cert.verdict == "false" and cert.family_label == "D0"

    def test_cq_source_witness(self):
        fam = DistinguisherFamilyCq([helstrom_table()])
        cert = h_hill_cond(bb84(), 0.2, fam, 0.1)
        assert cert.verdict == "true"
        assert np.allclose(cert.witness.joint().mat, bb84().joint().mat,
                           atol=1e-12)

    def test_cq_searched_witness_invariants(self):
        fam = DistinguisherFamilyCq([helstrom_table()])
        rho = bb84()
        cert = h_hill_cond(rho, 0.25, fam, 0.2)
        assert cert.verdict == "true"
        w = cert.witness
        assert h_min_cond(w) >= 0.25 - 1e-6
        stack = fam.effect_stack(rho.support)
        vw = np.real(np.einsum("msij,sij->m", np.conj(stack), w.blocks()))
        vr = np.real(np.einsum("msij,sij->m", np.conj(stack), rho.blocks()))
        assert float(np.max(np.abs(vw - vr))) <= 0.2 + 1e-6
        gap = w.marginal_b().mat - rho.marginal_b().mat
        assert float(np.max(np.abs(gap))) <= 1e-6

    def test_cq_relaxed_notion_and_monotonicity(self):
        fam = DistinguisherFamilyCq([helstrom_table()])
        strict = h_hill_cond(bb84(), 0.25, fam, 0.2)
        relaxed = h_hill_cond(bb84(), 0.25, fam, 0.2, relaxed=True)
        assert relaxed.notion == "rHILL"
        assert strict.verdict == "true"
        assert relaxed.verdict == "true"   # dropping a constraint keeps it

    def test_cq_classical_register_routed_exactly(self):
        one = DensityOperator(np.eye(1))
        cq = CqState(range(4), [0.4, 0.3, 0.2, 0.1], [one] * 4)
        tables = [{x: np.array([[float(pi[x, x])]]) for x in range(4)}
                  for pi in FAM_DIAG4]
        fam = DistinguisherFamilyCq(tables)
        cert = h_hill_cond(cq, 1.0, fam, 0.05)
        assert cert.verdict == "true"
        assert isinstance(cert.witness, CqState)
        assert h_min_cond(cert.witness) >= 1.0 - 1e-6
        assert h_hill_cond(cq, 2.0, fam, 0.05).verdict == "false"

    def test_cq_empty_family(self):
        cert = h_hill_cond(bb84(), 0.5, [], 0.1)
        assert cert.verdict == "true"
        assert h_min_cond(cert.witness) >= 0.5 - 1e-9
        assert h_hill_cond(bb84(), 1.5, [], 0.1).verdict == "false"


class TestHGuess:
    def test_helstrom_tight_frozen(self):
        table = helstrom_table()
        assert h_guess(bb84(), [table], K_HELSTROM, 0.0)
        assert not h_guess(bb84(), [table], K_HELSTROM + 0.01, 0.0)

    def test_strategy_value_matches_p_guess(self):
        pg, povm = qstate.p_guess(bb84())
        assert abs(pg - P_HELSTROM) < 1e-7
        assert h_guess(bb84(), [povm], -math.log2(pg) - 1e-6, 0.0)
        assert not h_guess(bb84(), [povm], -math.log2(pg) + 1e-3, 0.0)

    def test_uniform_strategy(self):
        table = {0: np.eye(2) / 2, 1: np.eye(2) / 2}
        assert h_guess(bb84(), [table], 1.0, 0.0)

    def test_classical_indicator_strategy(self, rng):
        probs = rng.dirichlet(np.ones(4))
        one = DensityOperator(np.eye(1))
        cq = CqState(range(4), probs, [one] * 4)
        best = int(np.argmax(probs))
        table = {x: np.array([[1.0 if x == best else 0.0]])
                 for x in range(4)}
        hmin = -math.log2(float(probs[best]))
        assert h_guess(cq, [table], hmin, 0.0)
        assert not h_guess(cq, [table], hmin + 0.01, 0.0)

    def test_povm_gate(self):
        with pytest.raises(StateError, match="identity"):
            h_guess(bb84(), [{0: np.eye(2), 1: np.eye(2)}], 1.0, 0.0)

    def test_missing_symbol(self):
        with pytest.raises(StateError, match="misses symbol"):
            h_guess(bb84(), [{0: np.eye(2)}], 1.0, 0.0)

    def test_sequence_length_gate(self):
        with pytest.raises(StateError, match="length"):
            h_guess(bb84(), [[np.eye(2)]], 1.0, 0.0)

    def test_negative_effect_rejected(self):
        bad = {0: -0.1 * np.eye(2), 1: 1.1 * np.eye(2)}
        with pytest.raises(StateError):
            h_guess(bb84(), [bad], 1.0, 0.0)

    def test_needs_cq_state(self):
        with pytest.raises(StateError, match="CqState"):
            h_guess(DensityOperator(np.eye(2) / 2), [], 1.0, 0.0)

    def test_no_strategies_vacuous(self):
        assert h_guess(bb84(), [], 10.0, 0.0)


class TestMetricToHill:
    def test_hill_branch(self):
        rep = metric_to_hill_experiment(RHO_DIAG4, 1.0, FAM_DIAG4[:2],
                                        0.05, 0.05)
        assert rep["branch"] == "hill" and rep["consistent"]
        assert rep["metric_verdict"] == "true"
        assert rep["eps_prime"] == 0.1
        assert rep["hill"]["verdict"] == "true"
        assert rep["universal"] is None

    def test_universal_branch_frozen(self):
        e0 = np.zeros((4, 4))
        e0[0, 0] = 1.0
        fam = DistinguisherFamily([e0, np.eye(4) * 0.5],
                                  labels=("P0", "HALF"))
        rep = metric_to_hill_experiment(e0, 2.0, fam, 0.1, 0.1)
        assert rep["branch"] == "universal" and rep["consistent"]
        assert rep["metric_verdict"] == "false"
        assert rep["hill"]["verdict"] == "false"
        uni = rep["universal"]
        # the floor set is the single point I/4, so the game must pick
        # the projector every round and certify its gap exactly
        assert abs(uni["gap"] - 0.75) < 1e-9
        assert uni["weights"] == {"P0": 1.0}
        assert uni["rounds"] == 8873
        json.dumps(rep)   # the report must serialize as-is

    def test_round_trip_never_flips_feasible_instances(self, rng):
        for _ in range(3):
            r = random_density(rng, 4)
            hmin = -math.log2(float(np.linalg.eigvalsh(r)[-1]))
            k = max(0.05, hmin - 0.1)
            fam = [random_effect(rng, 4) for _ in range(3)]
            rep = metric_to_hill_experiment(r, k, fam, 0.05, 0.05)
            assert rep["branch"] == "hill" and rep["consistent"]

    def test_cq_state_rejected(self):
        with pytest.raises(CapacityError, match="flatten"):
            metric_to_hill_experiment(bb84(), 0.2, [RHO_KET0], 0.1, 0.1)

    def test_floor_gate(self):
        with pytest.raises(ValueError, match="floor"):
            metric_to_hill_experiment(RHO_DIAG4, 3.0, FAM_DIAG4, 0.1, 0.1)

    def test_empty_family_gate(self):
        with pytest.raises(ValueError, match="at least one"):
            metric_to_hill_experiment(RHO_DIAG4, 1.0, [], 0.1, 0.1)

    def test_delta_gate(self):
        with pytest.raises(ValueError, match="delta"):
            metric_to_hill_experiment(RHO_DIAG4, 1.0, FAM_DIAG4, 0.1, 0.0)


class TestReverseDmt:
    @staticmethod
    def _split_instance(rng, d=2, delta=0.3):
        m = random_density(rng, d)
        q = random_density(rng, d)
        z = random_density(rng, d)
        y = delta * m + (1 - delta) * q
        return y, m, z

    def test_substitution_identity(self, rng):
        y, m, z = self._split_instance(rng)
        x = reverse_dmt(y, m, z, 0.3)
        assert float(np.max(np.abs((x.mat - y) - 0.3 * (z - m)))) < 1e-12
        for _ in range(50):
            pi = random_effect(rng, 2)
            lhs = abs(np.real(np.trace(pi @ (x.mat - y))))
            rhs = 0.3 * abs(np.real(np.trace(pi @ (z - m))))
            assert abs(lhs - rhs) < 1e-12

    def test_new_numerator_is_dense_in_output(self, rng):
        y, m, z = self._split_instance(rng)
        x = reverse_dmt(y, m, z, 0.3)
        assert qstate.is_delta_dense(z, x, 0.3)

    def test_same_numerator_returns_y(self, rng):
        y, m, _ = self._split_instance(rng)
        x = reverse_dmt(y, m, m, 0.3)
        assert float(np.max(np.abs(x.mat - y))) < 1e-12

    def test_delta_one_returns_z(self, rng):
        y, _, z = self._split_instance(rng)
        x = reverse_dmt(y, y, z, 1.0)
        assert np.allclose(x.mat, z, atol=1e-15)

    def test_density_precondition(self, rng):
        y, m, z = self._split_instance(rng)
        with pytest.raises(StateError, match="delta-dense"):
            reverse_dmt(m, y, z, 0.9)

    def test_delta_range_gate(self, rng):
        y, m, z = self._split_instance(rng)
        for bad in (0.0, -0.2, 1.5):
            with pytest.raises(StateError):
                reverse_dmt(y, m, z, bad)

    def test_dimension_gate(self, rng):
        y, m, _ = self._split_instance(rng)
        with pytest.raises(StateError, match="dimensions"):
            reverse_dmt(y, m, np.eye(3) / 3, 0.3)


class TestImplicationLattice:
    def test_hill_implies_metric_implies_pseudo(self, rng):
        for _ in range(6):
            d = 3
            r = random_density(rng, d)
            s = random_density(rng, d)
            lam = max(0.0, float(qstate.d_infinity(r, s))) + 0.05
            fam = [random_effect(rng, d) for _ in range(4)]
            ok, _ = check_hill1(r, s, lam, fam, 0.05)
            assert ok
            assert check_metric1(r, s, lam, fam, 0.05)
            assert check_pseudo_relative(r, s, lam, fam, 0.05)

    def test_metric_true_not_refuted_by_hill_at_doubled_eps(self):
        rho = np.diag([0.6, 0.3, 0.1])
        sig = np.diag([0.5, 0.3, 0.2])
        pi = np.diag([1.0, 0.4, 0.0])
        assert check_metric1(rho, sig, 0.5, [pi], 0.0)
        try:
            ok, _ = check_hill1(rho, sig, 0.5, [pi], 0.0)
        except solvers.SolverError:
            ok = None     # undetermined is allowed, refusal is not
        assert ok is not False

    def test_hill2_implies_pseudo_at_same_parameters(self):
        ok, _ = check_hill2(RHO_KET0, RHO_PLUS, 1.0, [RHO_KET0], 0.1)
        assert ok
        assert check_pseudo_relative(RHO_KET0, RHO_PLUS, 1.0, [RHO_KET0], 0.1)

    def test_net_family_lower_bounds_min_entropy(self):
        eps_net = 0.3
        net = tomog.build_net("bpovm", 2, eps_net)
        fam = DistinguisherFamily(list(net.points))
        rho = np.diag([0.85, 0.15])
        hmin = -math.log2(0.85)
        eps = 0.05
        for k in (0.2, 0.3, 1.0):
            cert = h_hill_cond(rho, k, fam, eps)
            if cert.verdict == "true":
                bound = -math.log2(2.0 ** -k + eps + 2.0 * eps_net)
                assert hmin >= bound - 1e-6
        # the floor one bit above the genuine entropy must be refused:
        # some net effect sits within eps_net of the top projector
        assert h_hill_cond(rho, 1.0, fam, eps).verdict == "false"
