import numpy as np
import pytest
from hypothesis import given, strategies as st

from preflabel.sat import (
    CnfFormula,
    DimacsError,
    SatGenerationStats,
    SatInstance,
    SolverBudgetError,
    cnf_to_graph,
    dpll_solve,
    emit_dimacs,
    evaluate_sat,
    generate_sat_dataset,
    literal_node,
    load_sat_dataset,
    parse_dimacs,
    random_assignment_error,
    random_formula,
    save_sat_dataset,
    verify_certificate,
)

from oracles import satisfiable_by_truth_table

FIG1 = "p cnf 2 2\n-1 0\n1 -2 0\n"


@st.composite
def formulas(draw, max_vars=6):
    nv = draw(st.integers(1, max_vars))
    clause = st.lists(st.integers(1, nv), min_size=1, max_size=min(3, nv), unique=True).flatmap(
        lambda vs: st.tuples(*[st.sampled_from((v, -v)) for v in vs])
    )
    return CnfFormula(nv, tuple(draw(st.lists(clause, max_size=12))))


class TestDimacs:
    def test_fig1(self):
        f = parse_dimacs(FIG1)
        assert f == CnfFormula(2, ((-1,), (1, -2)))

    def test_empty_formula(self):
        f = parse_dimacs("p cnf 1 0\n")
        assert f.clauses == () and dpll_solve(f) == (True,)

    def test_comments_and_percent_trailer(self):
        f = parse_dimacs("c hello\np cnf 3 2\n1 -3\n 0 2 0\n%\n0\n")
        assert f.clauses == ((1, -3), (2,))

    def test_repeated_literals_and_tautologies(self):
        f = parse_dimacs("p cnf 2 2\n1 1 2 0\n1 -1 0\n")
        assert f.clauses == ((1, 2),)

    @pytest.mark.parametrize(
        "text,line",
        [
            ("1 0\n", 1),
            ("p cnf 2\n", 1),
            ("p cnf 2 1\n1 x 0\n", 2),
            ("p cnf 2 1\n3 0\n", 2),
            ("p cnf 2 2\n1 0\n-2\n", 3),
            ("c x\np cnf 2 2\n1 0\n", 2),
            ("", 1),
        ],
    )
    def test_errors_carry_line(self, text, line):
        with pytest.raises(DimacsError) as err:
            parse_dimacs(text)
        assert err.value.line == line

    @given(formulas())
    def test_round_trip(self, f):
        assert parse_dimacs(emit_dimacs(f)) == f

    def test_fuzz_round_trip(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            nv = int(rng.integers(1, 12))
            f = random_formula(nv, int(rng.integers(0, 30)), 3, rng)
            assert parse_dimacs(emit_dimacs(f)) == f


class TestGraph:
    def test_fig1_structure(self):
        g, nm = cnf_to_graph(parse_dimacs(FIG1))
        assert g.n == 6 and nm.num_literals == 4
        c1, c2 = nm.clause_node(0), nm.clause_node(1)
        assert set(np.flatnonzero(g.adj[c1])) == {literal_node(-1)}
        assert set(np.flatnonzero(g.adj[c2])) == {literal_node(1), literal_node(-2)}
        np.testing.assert_array_equal(g.node_type, [0, 0, 0, 0, 1, 1])

    def test_zero_clauses(self):
        g, _ = cnf_to_graph(CnfFormula(3))
        assert g.edges() == [(0, 1), (2, 3), (4, 5)]
        g, _ = cnf_to_graph(CnfFormula(3), complement_edges=False)
        assert g.num_edges == 0

    def test_degree_counts(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            f = random_formula(int(rng.integers(3, 9)), int(rng.integers(1, 30)), 3, rng)
            g, nm = cnf_to_graph(f)
            deg = g.degrees()
            for j, c in enumerate(f.clauses):
                assert deg[nm.clause_node(j)] == len(c)
            for v in range(1, f.num_vars + 1):
                for lit in (v, -v):
                    occurs = sum(lit in c for c in f.clauses)
                    assert deg[literal_node(lit)] == occurs + 1


class TestSolver:
    def test_fig1_trace(self):
        assert dpll_solve(parse_dimacs(FIG1)) == (False, False)

    def test_unsat(self):
        assert dpll_solve(CnfFormula(1, ((1,), (-1,)))) is None

    def test_matches_truth_table(self):
        rng = np.random.default_rng(21)
        for _ in range(300):
            nv = int(rng.integers(1, 11))
            f = random_formula(nv, int(rng.integers(1, 6 * nv)), 3, rng)
            cert = dpll_solve(f)
            assert (cert is not None) == satisfiable_by_truth_table(nv, f.clauses)
            if cert is not None:
                assert verify_certificate(f, cert)

    def test_budget(self):
        with pytest.raises(SolverBudgetError):
            dpll_solve(CnfFormula(65))


class TestCertificate:
    def test_fig1(self):
        f = parse_dimacs(FIG1)
        assert verify_certificate(f, (False, False))
        assert not verify_certificate(f, (True, False))

    def test_zero_clauses(self):
        assert verify_certificate(CnfFormula(2), (True, False))

    def test_length_check(self):
        with pytest.raises(ValueError):
            verify_certificate(CnfFormula(2), (True,))


class TestDataset:
    def test_same_seed_same_data(self):
        a = generate_sat_dataset(30, seed=3)
        b = generate_sat_dataset(30, seed=3)
        assert [emit_dimacs(x.formula) for x in a] == [emit_dimacs(x.formula) for x in b]
        assert [x.certificate for x in a] == [x.certificate for x in b]

    def test_certificates_verify(self):
        stats = SatGenerationStats()
        insts = generate_sat_dataset(200, seed=0, stats=stats)
        assert all(verify_certificate(i.formula, i.certificate) for i in insts)
        assert all(len(i.formula.clauses) == round(4.0 * i.formula.num_vars) for i in insts)
        assert stats.accepted == 200 and 0 < stats.satisfiable_fraction <= 1

    def test_rejection_abort(self):
        with pytest.raises(RuntimeError, match="rejection"):
            generate_sat_dataset(5, (3, 3), ratio=30.0, seed=0)

    def test_target_encoding(self):
        inst = SatInstance(parse_dimacs(FIG1), (False, True))
        y = inst.target()
        np.testing.assert_array_equal(y[:4], [[1, 0], [0, 1], [0, 1], [1, 0]])
        np.testing.assert_array_equal(y[4:], 0.5)
        s = inst.sample()
        np.testing.assert_array_equal(s.mask, [1, 1, 1, 1, 0, 0])

    def test_manifest_round_trip(self, tmp_path):
        insts = generate_sat_dataset(12, seed=9)
        manifest = save_sat_dataset(insts, tmp_path / "sat")
        assert manifest.read_text().startswith("sat-dataset 1\nformula_000000.cnf ")
        back = load_sat_dataset(tmp_path / "sat")
        assert [b.formula for b in back] == [i.formula for i in insts]
        assert [b.certificate for b in back] == [i.certificate for i in insts]

    def test_manifest_rejects_bad_certificate(self, tmp_path):
        save_sat_dataset([SatInstance(parse_dimacs(FIG1), (False, False))], tmp_path)
        (tmp_path / "manifest.txt").write_text("sat-dataset 1\nformula_000000.cnf 10\n")
        with pytest.raises(DimacsError, match="line 2"):
            load_sat_dataset(tmp_path)


class TestEvaluate:
    def test_certificate_replay(self, monkeypatch):
        insts = generate_sat_dataset(25, seed=1)
        lookup = {inst.encode()[0]: inst.target() for inst in insts}

        class Pred:
            def __init__(self, m):
                self.matrix = m

        monkeypatch.setattr("preflabel.sat.predict", lambda model, g, *a, **k: Pred(lookup[g]))
        assert evaluate_sat(None, insts).error_rate == 0.0

    def test_random_assignment_floor(self):
        insts = generate_sat_dataset(300, seed=2)
        rate = random_assignment_error(insts, seed=0, trials=3)
        assert 0.5 < rate < 1.0
