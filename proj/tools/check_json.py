#!/usr/bin/env python3
"""Validate a JSON document against one of the schemas in tools/schemas."""
import json
import sys

import jsonschema

schema_path, doc_path = sys.argv[1], sys.argv[2]
with open(schema_path) as f:
    schema = json.load(f)
with open(doc_path) as f:
    doc = json.load(f)
try:
    jsonschema.validate(doc, schema)
except jsonschema.ValidationError as e:
    print(f"{doc_path}: {e.message}", file=sys.stderr)
    sys.exit(1)
