"""Episode dataset writer/loader.

Layout:

    out_dir/
      index.json                     per-episode success stats
      episode_0000/
        frame_0000.png ...           composited frames
        actions.json                 {dt, actions: [{q, gripper}]}
        meta.json                    episode metadata
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import load_png, save_png
from .manifest import TaskSpec, load_manifest, load_task
from .pipeline import Episode, generate_episode, load_assets

__all__ = ["write_episode", "write_dataset", "load_dataset", "generate_dataset", "EpisodeRecord"]


@dataclass
class EpisodeRecord:
    name: str
    joint_positions: np.ndarray
    gripper: np.ndarray
    dt: float
    metadata: dict
    frame_paths: list

    @property
    def success(self) -> bool:
        return bool(self.metadata["success"])

    def load_frame(self, i: int) -> np.ndarray:
        return load_png(self.frame_paths[i])


def write_episode(episode: Episode, episode_dir) -> dict:
    episode_dir = Path(episode_dir)
    episode_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(episode.frames):
        save_png(episode_dir / f"frame_{i:04d}.png", frame)
    actions = {
        "dt": episode.metadata.get("dt", 0.05),
        "actions": [
            {"q": [float(x) for x in q], "gripper": int(g)}
            for q, g in zip(episode.joint_positions, episode.gripper)
        ],
    }
    with open(episode_dir / "actions.json", "w") as f:
        json.dump(actions, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(episode_dir / "meta.json", "w") as f:
        json.dump(episode.metadata, f, indent=2, sort_keys=True)
        f.write("\n")
    return {
        "name": episode_dir.name,
        "frames": len(episode.frames),
        "success": bool(episode.metadata["success"]),
        "seed": int(episode.metadata["seed"]),
        "failure_stage": episode.metadata.get("failure_stage"),
    }


def write_dataset(episodes, out_dir) -> dict:
    """Write episodes as zero-padded directories plus a top-level index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = [
        write_episode(ep, out_dir / f"episode_{i:04d}") for i, ep in enumerate(episodes)
    ]
    index = _index_from_entries(entries)
    with open(out_dir / "index.json", "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
        f.write("\n")
    return index


def _index_from_entries(entries) -> dict:
    return {
        "episodes": entries,
        "count": len(entries),
        "successes": sum(1 for e in entries if e["success"]),
    }


def load_dataset(out_dir) -> list:
    out_dir = Path(out_dir)
    with open(out_dir / "index.json") as f:
        index = json.load(f)
    records = []
    for entry in index["episodes"]:
        ep_dir = out_dir / entry["name"]
        with open(ep_dir / "actions.json") as f:
            actions = json.load(f)
        with open(ep_dir / "meta.json") as f:
            meta = json.load(f)
        qs = np.asarray([a["q"] for a in actions["actions"]], dtype=np.float64)
        gripper = np.asarray([a["gripper"] for a in actions["actions"]], dtype=np.int64)
        frame_paths = sorted(ep_dir.glob("frame_*.png"))
        records.append(
            EpisodeRecord(entry["name"], qs, gripper, float(actions["dt"]), meta, frame_paths)
        )
    return records


def _generate_one(args) -> dict:
    manifest_path, task_doc, seed, episode_dir = args
    manifest = load_manifest(manifest_path)
    task = load_task(task_doc)
    assets = load_assets(manifest)
    from .pipeline import compose_world

    world = compose_world(manifest, assets)
    episode = generate_episode(world, manifest, task, seed)
    return write_episode(episode, episode_dir)


def generate_dataset(
    manifest_path,
    task: TaskSpec | dict,
    count: int,
    out_dir,
    base_seed: int = 0,
    workers: int = 1,
) -> dict:
    """Generate `count` episodes with per-episode seeds base_seed + i.

    With workers > 1 episodes run in parallel processes; per-episode
    outputs are byte-identical to a serial run because each episode is a
    pure function of (manifest, task, seed).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    task_doc = task.to_json() if isinstance(task, TaskSpec) else dict(task)
    jobs = [
        (str(manifest_path), task_doc, base_seed + i, str(out_dir / f"episode_{i:04d}"))
        for i in range(count)
    ]
    if workers <= 1:
        entries = [_generate_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_generate_one, jobs))
    index = _index_from_entries(entries)
    with open(out_dir / "index.json", "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
        f.write("\n")
    return index
