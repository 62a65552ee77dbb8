"""End-to-end: the chainlab CLI driving this package as its scorer.

These tests exercise only the public seams between the two packages —
the command line, the record file formats, and the wire protocol.
Nothing here imports chainlab.
"""

import json
import shutil
import subprocess
import sys

import pytest

pytestmark = pytest.mark.skipif(
    shutil.which("chainlab") is None, reason="chainlab CLI not installed"
)

FACTS = [
    "Static electricity can cause sparks",
    "Sparks can start a forest fire",
    "Rain can cause floods",
    "Floods can cause erosion",
    "Lightning can cause thunder",
    "Wind can cause waves",
]

QUESTION = {
    "question_id": "q1",
    "question": "What can cause a forest fire?",
    "answer": "static electricity",
}

#: Chains and their consistent entity renamings (all names stay nouns,
#: so both sides delexicalize to the same pattern).
RENAMED_PAIRS = [
    (
        (
            "Static electricity can cause sparks",
            "Sparks can start a forest fire",
            "Static electricity can start a forest fire",
        ),
        (
            "Friction can cause embers",
            "Embers can start a wildfire",
            "Friction can start a wildfire",
        ),
    ),
    (
        ("Rain can cause floods", "Floods can start erosion", "Rain can start erosion"),
        ("Wind can cause waves", "Waves can start fog", "Wind can start fog"),
    ),
    (
        (
            "Lightning can cause thunder",
            "Thunder can start hail",
            "Lightning can start hail",
        ),
        ("Magma can cause steam", "Steam can start frost", "Magma can start frost"),
    ),
]


def run_chainlab(*args):
    return subprocess.run(
        ["chainlab", *args], check=True, capture_output=True, text=True, timeout=300
    )


def read_score_records(path):
    records = [
        json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()
    ]
    return [r for r in records if r.get("record_type") == "score"]


def write_chain_file(path, chains):
    with open(path, "w", encoding="utf-8") as handle:
        for i, (f1, f2, h) in enumerate(chains):
            handle.write(
                json.dumps(
                    {
                        "record_type": "chain",
                        "chain_id": f"q{i}#0",
                        "question_id": f"q{i}",
                        "f1": f1,
                        "f2": f2,
                        "hypothesis": h,
                    }
                )
                + "\n"
            )


@pytest.fixture(scope="module")
def serve_spec(toy_run):
    return (
        f"cmd:{sys.executable} -m chainbridge.cli serve "
        f"--checkpoint {toy_run.checkpoint_dir}"
    )


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A retrieval workspace built entirely by the chainlab CLI."""
    root = tmp_path_factory.mktemp("xchain")
    (root / "facts.txt").write_text("".join(f"{f}\n" for f in FACTS), encoding="utf-8")
    (root / "questions.jsonl").write_text(
        json.dumps(QUESTION) + "\n", encoding="utf-8"
    )
    run_chainlab("index", "--facts", str(root / "facts.txt"), "--out", str(root / "idx"))
    run_chainlab(
        "retrieve",
        "--index",
        str(root / "idx"),
        "--questions",
        str(root / "questions.jsonl"),
        "--out",
        str(root / "chains.jsonl"),
    )
    return root


class TestSubprocessScorer:
    def test_surface_scoring_of_retrieved_chains(self, workspace, serve_spec):
        out = workspace / "scores_surface.jsonl"
        run_chainlab(
            "score",
            "--in",
            str(workspace / "chains.jsonl"),
            "--out",
            str(out),
            "--scorer",
            serve_spec,
            "--repr",
            "surface",
        )
        records = read_score_records(out)
        chains = [
            json.loads(line)
            for line in (workspace / "chains.jsonl").read_text(encoding="utf-8").splitlines()
        ]
        chain_ids = {r["chain_id"] for r in chains if r.get("record_type") == "chain"}
        assert {r["chain_id"] for r in records} == chain_ids
        assert all(0.0 <= r["score"] <= 1.0 for r in records)

    def test_delexicalized_scoring_of_retrieved_chains(self, workspace, serve_spec):
        out = workspace / "scores_grc.jsonl"
        run_chainlab(
            "score",
            "--in",
            str(workspace / "chains.jsonl"),
            "--out",
            str(out),
            "--scorer",
            serve_spec,
            "--repr",
            "grc",
        )
        records = read_score_records(out)
        assert records
        assert all(0.0 <= r["score"] <= 1.0 for r in records)

    def test_offline_score_file_agrees_with_the_served_scores(
        self, workspace, serve_spec, toy_run
    ):
        served = workspace / "scores_surface2.jsonl"
        run_chainlab(
            "score",
            "--in",
            str(workspace / "chains.jsonl"),
            "--out",
            str(served),
            "--scorer",
            serve_spec,
        )
        offline = workspace / "scores_offline.jsonl"
        code = subprocess.run(
            [
                sys.executable,
                "-m",
                "chainbridge.cli",
                "score-file",
                "--checkpoint",
                str(toy_run.checkpoint_dir),
                "--chains",
                str(workspace / "chains.jsonl"),
                "--out",
                str(offline),
            ],
            check=True,
            timeout=300,
        ).returncode
        assert code == 0
        by_id = {r["chain_id"]: r["score"] for r in read_score_records(served)}
        for record in read_score_records(offline):
            assert record["score"] == pytest.approx(by_id[record["chain_id"]], abs=1e-6)


class TestHttpScorer:
    def test_surface_scoring_over_http(self, workspace, toy_run):
        server = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "chainbridge.cli",
                "serve",
                "--checkpoint",
                str(toy_run.checkpoint_dir),
                "--http",
                "0",
            ],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            port = int(server.stderr.readline().rsplit(" ", 1)[-1])
            out = workspace / "scores_http.jsonl"
            run_chainlab(
                "score",
                "--in",
                str(workspace / "chains.jsonl"),
                "--out",
                str(out),
                "--scorer",
                f"http://127.0.0.1:{port}",
            )
            records = read_score_records(out)
            assert records
            assert all(0.0 <= r["score"] <= 1.0 for r in records)
        finally:
            server.terminate()
            server.wait(timeout=30)


class TestRenamingConsistency:
    def test_consistent_renamings_change_no_delexicalized_score(
        self, tmp_path, serve_spec
    ):
        """Alpha-equivalent chains get byte-identical requests, so the
        served scores must not move at all under entity renaming."""
        orig, edited = tmp_path / "orig.jsonl", tmp_path / "edited.jsonl"
        write_chain_file(orig, [pair[0] for pair in RENAMED_PAIRS])
        write_chain_file(edited, [pair[1] for pair in RENAMED_PAIRS])
        scores_a, scores_b = tmp_path / "sa.jsonl", tmp_path / "sb.jsonl"
        for chains, scores in ((orig, scores_a), (edited, scores_b)):
            run_chainlab(
                "score",
                "--in",
                str(chains),
                "--out",
                str(scores),
                "--scorer",
                serve_spec,
                "--repr",
                "grc",
            )
        report_path = tmp_path / "report.json"
        run_chainlab(
            "consistency",
            "--orig",
            str(orig),
            "--edited",
            str(edited),
            "--scores-a",
            str(scores_a),
            "--scores-b",
            str(scores_b),
            "--out",
            str(report_path),
        )
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert report["pairs"] == len(RENAMED_PAIRS)
        assert report["fraction_zero_change"] == 1.0
        assert report["mean_abs_change"] == 0.0
