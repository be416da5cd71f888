"""Smoke test for the adaptive_survey extension module.

Build and install first, e.g. `maturin build --release -m crates/py/Cargo.toml`
followed by `pip install target/wheels/adaptive_survey-*.whl`.
"""

import json
import math
import os
import sys
import tempfile

import adaptive_survey as s


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    check(s.normalize_likert(0, 4) == 0.0 and s.normalize_likert(3, 4) == 1.0, "likert endpoints")
    check(abs(s.normalize_likert(1, 3) - 0.5) < 1e-12, "likert midpoint")

    world = s.planted_world(seed=7, n_questions=20, n_parties=4, candidates_per_party=15, n_voters=200)
    qn, cands, voters = world["questionnaire"], world["candidates"], world["voters"]
    check(len(qn) == 20 and cands.n_rows == 60 and len(voters) == 200, "planted world shape")
    check(abs(sum(f for _, f in world["vote_shares"]) - 1.0) < 1e-9, "vote shares sum to one")
    json.loads(qn.to_json())

    model = s.Model.fit(cands, qn, seed=1)
    check(model.n_questions == 20, "model fit")
    again = s.Model.from_json(model.to_json())
    check(again.predict(0.1, -0.2) == model.predict(0.1, -0.2), "model json round trip")
    check(all(0.0 < p < 1.0 for p in model.predict(0.0, 0.0)), "predictions are probabilities")

    session = s.Session(model, k=8)
    truth = voters.rows()[0]
    seen = []
    q = session.next_question
    while q is not None:
        seen.append(q)
        value = truth[q] if truth[q] is not None else 0.5
        q = session.answer(q, value)
    check(len(seen) == 8 and len(set(seen)) == 8, "session asks k distinct questions")
    imputed = session.imputed()
    check(len(imputed) == 20 and all(imputed[i] == v for i, v in session.answered), "imputation keeps answers")
    recs = session.recommend(cands, k=5)
    check(len(recs) == 5 and all(a[2] <= b[2] for a, b in zip(recs, recs[1:])), "recommendations sorted")
    check(s.recommend(imputed, cands, k=5) == recs, "free recommend agrees with session")
    try:
        session.answer(seen[0], 0.5)
        check(False, "repeat answer rejected")
    except ValueError:
        check(True, "repeat answer rejected")

    cold = s.simulate(voters, cands, qn, condition="coldstart", k=10, u=5, n_users=60, seed=3)
    warm = s.simulate(voters, cands, qn, condition="candidates", k=10, u=5, n_users=60, seed=3)
    check(len(cold["rmse"]) == 60 and len(cold["interactions"]) == 600, "simulation curves and log")
    check(cold["user_order"] == warm["user_order"], "paired user order")
    same = s.simulate(voters, cands, qn, condition="coldstart", k=10, u=5, n_users=60, seed=3)
    check(same["rmse"] == cold["rmse"], "simulation is deterministic")

    t, df, p = s.welch_t_test([1.0, 1.1, 0.9, 1.05], [2.0, 2.1, 1.9, 2.2])
    check(t < 0 and df > 0 and p < 0.01, "welch t-test")
    n = s.break_even([1.0] * 10 + [0.1] * 30, [0.5] * 40, metric="rmse", window=3, persistence=5)
    check(n is not None and 10 < n <= 15, "break-even")
    check(s.full_replacement_users(400, 4.0, 5) is not None, "full replacement")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "cands.csv")
        cands.save(path, qn)
        back = s.ResponseMatrix.load(path, qn, "candidate")
        check(back.ids() == cands.ids() and back.parties() == cands.parties(), "csv round trip")

    m = s.ResponseMatrix.from_rows([[0.0, None], [1.0, 0.5]])
    check(m.rows()[0][1] is None and not math.isnan(m.rows()[1][1]), "missing answers")
    print(f"adaptive_survey {s.__version__}: all checks passed")


if __name__ == "__main__":
    main()
