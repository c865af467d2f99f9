"""Smoke test for the intermit extension module.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import intermit

PAIR_UPDATE = """
TS int a = 1;
TS int b = 0;
entry task first { b = a; a = b + 1; transition_to(second); }
task second { b = b + a; output(b); halt; }
"""


def main():
    p = intermit.parse(PAIR_UPDATE)
    assert p.tasks == ["first", "second"], p.tasks

    report = p.analyze()
    assert report["tasks"]["first"] == ["a"], report
    assert report["maxCommitListSize"] == 1, report

    src, manifest = p.transform("redo")
    assert "pre_commit" in src
    assert manifest["mode"] == "redo"

    r = p.run(mode="undo")
    assert r["halted"] and r["observation"]["outputs"] == [3], r
    r = p.run(mode="redo", schedule=[4, 9])
    assert r["stats"]["reboots"] == 2 and r["divergence"] is None, r

    v = p.verify(mode="undo", fuzz_runs=50)
    assert v["passed"] and v["failure_points"] > 0, v

    assert "rsa_unprotected" in intermit.corpus()
    bad = intermit.load("rsa_unprotected").verify(mode="redo")
    assert not bad["passed"] and bad["divergences"], bad

    try:
        intermit.parse("entry task t { x = ; }")
    except ValueError as e:
        assert "1:" in str(e), e
    else:
        raise AssertionError("parse error not raised")

    print(f"intermit {intermit.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
