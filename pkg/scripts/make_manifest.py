#!/usr/bin/env python3
"""Build a dataset manifest from two directories of images.

Every file under --members becomes a member entry, every file under
--nonmembers a non-member entry; paths are relative to --root (so the
manifest stays portable next to the image tree) and ids are those
paths flattened to a/b.png -> a_b.png, since exchange item names must
not contain separators.

    python3 scripts/make_manifest.py --root data \
        --members data/train --nonmembers data/holdout --out manifest.json
"""

import argparse
import json
from pathlib import Path

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


def image_paths(root: Path):
    return sorted(p for p in root.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)


def entries(image_dir: Path, root: Path, is_member: bool):
    rows = []
    for p in image_paths(image_dir):
        rel = p.relative_to(root).as_posix()
        rows.append({"id": rel.replace("/", "_"), "path": rel, "is_member": is_member})
    return rows


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", required=True, help="directory manifest paths are relative to")
    parser.add_argument("--members", required=True, help="directory of member images")
    parser.add_argument("--nonmembers", required=True, help="directory of non-member images")
    parser.add_argument("--out", required=True, help="manifest JSON to write")
    return parser.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    root = Path(args.root)
    rows = entries(Path(args.members), root, True) + entries(Path(args.nonmembers), root, False)
    if not rows:
        raise SystemExit("no images found")
    ids = [r["id"] for r in rows]
    if len(set(ids)) != len(ids):
        raise SystemExit("flattened ids collide; rename the offending files")
    Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    members = sum(r["is_member"] for r in rows)
    print(f"wrote {args.out}: {members} members, {len(rows) - members} non-members")
