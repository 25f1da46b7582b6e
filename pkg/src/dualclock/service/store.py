"""Persistence for the project/job service: a content-addressed blob
directory plus a transactional sqlite index for metadata.

Blob hashes double as reproducibility anchors: a generation result is stored
under the hash of its quantized pixel content, so identical manifests land on
identical refs.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import time
import uuid
from pathlib import Path
from typing import Optional

_SCHEMA = """
CREATE TABLE IF NOT EXISTS projects (
    id TEXT PRIMARY KEY,
    data TEXT NOT NULL,
    created REAL NOT NULL,
    updated REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
    id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL,
    data TEXT NOT NULL,
    created REAL NOT NULL,
    updated REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS request_keys (
    key TEXT PRIMARY KEY,
    kind TEXT NOT NULL,
    resource_id TEXT NOT NULL
);
"""


class NotFound(KeyError):
    pass


class Store:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.blob_dir = self.root / "blobs"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self.db_path = self.root / "index.db"
        with self._connect() as con:
            con.executescript(_SCHEMA)

    def _connect(self) -> sqlite3.Connection:
        con = sqlite3.connect(self.db_path, timeout=30.0)
        con.execute("PRAGMA journal_mode=WAL")
        return con

    # ------------------------------------------------------------- blobs

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.blob_dir / digest
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return digest

    def get_blob(self, digest: str) -> bytes:
        path = self.blob_dir / digest
        if not path.exists():
            raise NotFound(f"blob {digest}")
        return path.read_bytes()

    def has_blob(self, digest: str) -> bool:
        return (self.blob_dir / digest).exists()

    # ----------------------------------------------------------- projects

    def create_project(self, data: dict, request_key: Optional[str] = None) -> dict:
        now = time.time()
        with self._connect() as con:
            if request_key:
                row = con.execute(
                    "SELECT resource_id FROM request_keys WHERE key=? AND kind='project'",
                    (request_key,),
                ).fetchone()
                if row:
                    return self.get_project(row[0])
            project_id = uuid.uuid4().hex
            data = {**data, "id": project_id, "created": now, "updated": now}
            con.execute(
                "INSERT INTO projects (id, data, created, updated) VALUES (?,?,?,?)",
                (project_id, json.dumps(data), now, now),
            )
            if request_key:
                con.execute(
                    "INSERT INTO request_keys (key, kind, resource_id) VALUES (?,?,?)",
                    (request_key, "project", project_id),
                )
        return data

    def get_project(self, project_id: str) -> dict:
        with self._connect() as con:
            row = con.execute("SELECT data FROM projects WHERE id=?", (project_id,)).fetchone()
        if row is None:
            raise NotFound(f"project {project_id}")
        return json.loads(row[0])

    def update_project(self, project_id: str, data: dict) -> None:
        now = time.time()
        data = {**data, "updated": now}
        with self._connect() as con:
            cur = con.execute(
                "UPDATE projects SET data=?, updated=? WHERE id=?",
                (json.dumps(data), now, project_id),
            )
            if cur.rowcount == 0:
                raise NotFound(f"project {project_id}")

    # --------------------------------------------------------------- jobs

    def create_job(self, project_id: str, data: dict, request_key: Optional[str] = None) -> dict:
        now = time.time()
        with self._connect() as con:
            if request_key:
                row = con.execute(
                    "SELECT resource_id FROM request_keys WHERE key=? AND kind='job'",
                    (request_key,),
                ).fetchone()
                if row:
                    return self.get_job(row[0])
            job_id = uuid.uuid4().hex
            data = {**data, "id": job_id, "project_id": project_id,
                    "created": now, "updated": now}
            con.execute(
                "INSERT INTO jobs (id, project_id, data, created, updated) VALUES (?,?,?,?,?)",
                (job_id, project_id, json.dumps(data), now, now),
            )
            if request_key:
                con.execute(
                    "INSERT INTO request_keys (key, kind, resource_id) VALUES (?,?,?)",
                    (request_key, "job", job_id),
                )
        return data

    def get_job(self, job_id: str) -> dict:
        with self._connect() as con:
            row = con.execute("SELECT data FROM jobs WHERE id=?", (job_id,)).fetchone()
        if row is None:
            raise NotFound(f"job {job_id}")
        return json.loads(row[0])

    def update_job(self, job_id: str, **fields) -> dict:
        now = time.time()
        with self._connect() as con:
            row = con.execute("SELECT data FROM jobs WHERE id=?", (job_id,)).fetchone()
            if row is None:
                raise NotFound(f"job {job_id}")
            data = json.loads(row[0])
            data.update(fields)
            data["updated"] = now
            con.execute(
                "UPDATE jobs SET data=?, updated=? WHERE id=?",
                (json.dumps(data), now, job_id),
            )
        return data

    def jobs_with_status(self, status: str) -> list[dict]:
        with self._connect() as con:
            rows = con.execute("SELECT data FROM jobs ORDER BY created").fetchall()
        return [d for d in (json.loads(r[0]) for r in rows) if d.get("status") == status]
