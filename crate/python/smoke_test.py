#!/usr/bin/env python3
"""Smoke test for the wkm_py extension module.

Builds nothing itself: run `cargo build -p wkm-py` first, then
`python3 python/smoke_test.py`. The script locates the compiled cdylib under
target/, exposes it under the importable module name, and exercises the
bound surface end to end.
"""

import importlib
import pathlib
import shutil
import sys
import sysconfig
import tempfile


def locate_cdylib() -> pathlib.Path:
    root = pathlib.Path(__file__).resolve().parent.parent
    candidates = []
    for profile in ("debug", "release"):
        for name in ("libwkm_py.so", "libwkm_py.dylib", "wkm_py.dll"):
            p = root / "target" / profile / name
            if p.is_file():
                candidates.append(p)
    if not candidates:
        sys.exit("wkm_py cdylib not found; run `cargo build -p wkm-py` first")
    return max(candidates, key=lambda p: p.stat().st_mtime)


def import_module(cdylib: pathlib.Path, scratch: pathlib.Path):
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy2(cdylib, scratch / f"wkm_py{suffix}")
    sys.path.insert(0, str(scratch))
    return importlib.import_module("wkm_py")


def main() -> None:
    with tempfile.TemporaryDirectory() as scratch:
        wkm = import_module(locate_cdylib(), pathlib.Path(scratch))

        # canonicalization and embedding
        assert wkm.canonical_action_id("  Go  To   Bed 1 ") == "go to bed 1"
        vec = wkm.hash_embed("you have found the book")
        assert len(vec) == wkm.HASH_EMBED_DIM
        assert abs(wkm.cosine(vec, vec) - 1.0) < 1e-12

        # fusion: gamma extremes and the mid-point arithmetic
        ids = ["go to bed 1", "open cabinet 1"]
        action, fused = wkm.fuse(ids, [0.9, 0.1], [0.0, 1.0], 1.0)
        assert action == "go to bed 1"
        action, fused = wkm.fuse(ids, [0.9, 0.1], [0.0, 1.0], 0.0)
        assert action == "open cabinet 1"
        action, fused = wkm.fuse(ids, [0.1, 0.9], [1.0, 0.0], 0.4)
        assert action == "go to bed 1" and abs(fused[0] - 0.64) < 1e-12
        action, _ = wkm.fuse(ids, [0.3, 0.7], None, 0.4)
        assert action == "open cabinet 1"
        assert abs(wkm.default_gamma("household") - 0.4) < 1e-12

        # suite generation and oracle replay through a live episode
        suite = wkm.TaskSuite.generate("household", 7, 3, 1, 1)
        assert len(suite) == 5
        task_id, split, instruction, plan = suite.tasks()[0]
        assert split == "train" and "Your task is to:" in instruction
        episode = suite.episode(task_id)
        reward = 0.0
        for step_action in plan:
            assert step_action in episode.available_actions()
            _, done, reward, valid = episode.step(step_action)
            assert valid
        assert done and reward == 1.0 and episode.steps_taken() == len(plan)

        # invalid actions observe "Nothing happens." and carry no reward
        episode = suite.episode(task_id)
        obs, _, reward, valid = episode.step("flibber the wugget")
        assert obs == "Nothing happens." and not valid and reward == 0.0

        # knowledge base retrieval and counting
        kb = wkm.KnowledgeBase.from_triplets(
            [
                ("found the book on the bed", "go to bed 1", "take book 1 from bed 1"),
                ("found the book on the bed", "go to bed 1", "take book 1 from bed 1"),
                ("looked at the empty desk", "go to bed 1", "go to desk 1"),
            ]
        )
        assert len(kb) == 3
        query = wkm.hash_embed("found the book on the bed")
        hits = kb.knn(query, "go to bed 1", 10)
        assert len(hits) == 3 and abs(hits[0][1] - 1.0) < 1e-12
        probs = kb.next_action_probs(
            query, "go to bed 1", 10, ["take book 1 from bed 1", "go to desk 1"]
        )
        assert probs == [2.0 / 3.0, 1.0 / 3.0]
        assert kb.next_action_probs(query, "go to bed 1", 10, ["unrelated"]) is None

    print("smoke_test: all checks passed")


if __name__ == "__main__":
    main()
