#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : artifacts.py
@Time    : 2025年08月04日 11:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 产物读写 - 原子写入与带schema版本的JSON
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict

import pandas as pd

from .exceptions import CheckpointError

SCHEMA_VERSION = 1


def atomic_write_text(path, text: str) -> Path:
    """先写临时文件再替换, 避免读到半截文件"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def write_json(path, payload: Dict[str, Any], kind: str) -> Path:
    """写入带 schema_version 与 kind 的JSON文档"""
    document = {"schema_version": SCHEMA_VERSION, "kind": kind, **payload}
    return atomic_write_text(path, json.dumps(document, indent=2, ensure_ascii=False))


def read_json(path, kind: str) -> Dict[str, Any]:
    """读取并校验JSON文档的版本与类型"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"无法读取 {path}: {e}") from e
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CheckpointError(f"{path} 的schema版本 {version} 不受支持 (期望 {SCHEMA_VERSION})")
    if document.get("kind") != kind:
        raise CheckpointError(f"{path} 类型为 {document.get('kind')!r}, 期望 {kind!r}")
    return document


def write_csv(path, frame: pd.DataFrame) -> Path:
    """DataFrame 原子写入CSV"""
    return atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
