"""
This module provides functions for reading YAML files and paxcast JSON artifacts.

Functions:
    - read_yaml(path_to_yaml): Read a YAML file and return its content as a dictionary.
    - read_artifact(path): Read a JSON artifact and check its schema version.
"""
from __future__ import annotations

import json

import yaml

from paxcast.errors import SchemaError

SCHEMA_VERSION = 1


def read_yaml(path_to_yaml):
    """Read yaml file and return data from loaded yaml file"""
    with open(path_to_yaml) as file:
        data = yaml.safe_load(file)
    return data


def read_artifact(path, kind=None):
    """Read a JSON artifact written by util.write_artifact()

    Args:
        path: str, artifact location
        kind: optional expected value of the artifact's "kind" field

    Returns:
        dict with the artifact content
    """
    with open(path) as fid:
        try:
            document = json.load(fid)
        except json.JSONDecodeError as err:
            raise SchemaError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(document, dict):
        raise SchemaError(f"{path} does not hold a JSON object")

    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"{path} has schema_version {version!r}, expected {SCHEMA_VERSION}",
        )
    if kind is not None and document.get("kind") != kind:
        raise SchemaError(f"{path} holds {document.get('kind')!r}, expected {kind!r}")
    return document
