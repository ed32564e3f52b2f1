import json
import math

import pytest

import mdlab


def test_local_strict_examples():
    assert mdlab.local_strict([1, 2, 3, 4]) == 1.0
    assert mdlab.local_strict([2, 1, 3]) == pytest.approx(2 / 3)
    assert mdlab.local_strict([3, 2, 1]) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        mdlab.local_strict([1, 1, 2])


def test_advantages_and_surrogate():
    assert mdlab.group_advantages([1, 0, 0, 1]) == pytest.approx([1, -1, -1, 1], abs=1e-5)
    assert mdlab.clipped_term(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert mdlab.clipped_term(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert mdlab.gae_step_advantages([0, 1], [0, 0, 0], 0.9, 0.95) == pytest.approx([0.855, 1.0])
    assert mdlab.stage_block_sizes(2, 8) == [2, 4, 8]


def test_pass_at_k_and_verify():
    assert mdlab.pass_at_k(5, 2, 1) == pytest.approx(0.4)
    assert mdlab.pass_at_k(5, 0, 3) == 0.0
    problems = mdlab.generate_dataset({"count": 20}, 3)
    assert len(problems) == 20
    p = problems[0]
    assert mdlab.verify("####" + p["answer"], p) == 1.0
    assert mdlab.verify("####" + p["answer"] + "1", p) == 0.0


def test_vocab_round_trip():
    v = mdlab.Vocab()
    ids = v.encode("12+34=")
    assert v.decode(ids) == "12+34="
    assert v.response_text(ids + [mdlab.Vocab.EOS, 5]) == "12+34="


def test_greedy_block_one_is_left_to_right():
    m = mdlab.Model({"d_model": 16, "n_heads": 2, "d_ff": 32}, seed=4)
    out = m.decode("12+34=", block_size=1)
    trace = out["trace"]
    assert mdlab.local_strict(mdlab.linearize(trace)) == 1.0
    grid = mdlab.heatmap_grid(trace)
    assert max(max(r) for r in grid) == out["num_steps"]
    assert all(lp <= 0.0 for lp in out["logprobs"])


def test_sampled_decode_is_seeded():
    m = mdlab.Model({"d_model": 16, "n_heads": 2, "d_ff": 32}, seed=5)
    a = m.decode("40+2=", block_size=4, sample=True, seed=9)
    b = m.decode("40+2=", block_size=4, sample=True, seed=9)
    assert a["tokens"] == b["tokens"]
    assert a["logprobs"] == b["logprobs"]


def test_commands_end_to_end(tmp_path):
    cfg = mdlab.default_config()
    cfg["model"].update({"d_model": 16, "n_heads": 2, "d_ff": 32})
    cfg["dataset"]["count"] = 200
    cfg["sft"].update({"steps": 10, "batch_size": 4, "warmup_steps": 2, "log_every": 5,
                       "eval_every": 5, "checkpoint_every": 5})
    cfg["eval"]["count"] = 6
    cfg["train"].update({"batch_prompts": 2, "group_size": 2})
    cfg["rl"].update({"updates": 1, "eval_every": 1})

    sft = mdlab.sft(cfg, out=str(tmp_path / "sft"))
    assert sft["status"] == "completed"
    ckpt = str(tmp_path / "sft" / "final.ckpt")
    cfg["dataset_path"] = str(tmp_path / "sft" / "dataset.jsonl")

    rl = mdlab.rl(cfg, ckpt, out=str(tmp_path / "rl"))
    assert 0.0 <= rl["final_val_pass1"] <= 1.0

    report = mdlab.evaluate(cfg, ckpt, out=str(tmp_path / "eval"), block_size=2)
    assert report["report"]["problems"] == 6

    summary = mdlab.analyze(cfg, [str(tmp_path / "eval" / "traces.jsonl")], out=str(tmp_path / "analyze"))
    row = summary["summary"][0]
    assert row["trace_count"] == 6
    assert 0.0 < row["mean_localstrict"] <= 1.0

    loaded = mdlab.Model.load(ckpt)
    assert loaded.config["d_model"] == 16
    assert loaded.num_parameters > 0


def test_missing_checkpoint_is_named(tmp_path):
    missing = str(tmp_path / "nope.ckpt")
    with pytest.raises(mdlab.FileError, match="nope.ckpt"):
        mdlab.Model.load(missing)


def test_unknown_config_key_is_rejected(tmp_path):
    cfg = mdlab.default_config()
    cfg["train"]["betta"] = 0.1
    with pytest.raises(Exception, match="train.betta"):
        mdlab.sft(cfg, out=str(tmp_path / "x"))
