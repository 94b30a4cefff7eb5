#!/usr/bin/env python3
"""Builds the scripted mock fixture for the toy project.

Usage: make_mock.py <prompts dir of a dry run> <fixture.json>

Each prompt gets a three-option completion derived by fixed rewrite rules
from the original fragment quoted in the prompt. Some prompts are made to
yield identical, duplicate, or unparsable options, one answers without any
code block, and one is rate limited once before succeeding.
"""

import glob
import hashlib
import json
import os
import re
import sys

# Rewrites for specific fragments of the toy project. `true`/`n >= 0` in the
# loop conditions never terminate and exercise the timeout path.
SPECIFIC = {
    "b !== 0": ["true", "b === 0", "b > 1"],
    "n > 0": ["n >= 0", "n > 1", "n < 0"],
    "q.size > 0": ["q.size > 1", "q.size >= 0", "q.size < 0"],
    "s.length === 0": ["s.length !== 0", "s.length === 1", "s.length <= 0"],
    "this.items.length === 0": ["this.items.length === 1", "this.items.length < 0", "!this.items"],
    "'aeiou'.indexOf(ch) >= 0": ["'aeiou'.indexOf(ch) > 0", "'aeio'.indexOf(ch) >= 0", "'aeiou'.indexOf(ch) >= -1"],
    "k in obj": ["k in out", "!(k in obj)", "obj[k] !== undefined"],
    "Object.prototype.hasOwnProperty.call(obj, k)": ["obj[k]", "k in Object", "Object.prototype.hasOwnProperty.call(out, k)"],
    "Math.floor(score / 10)": ["Math.ceil(score / 10)", "Math.floor(score / 9)", "Math.round(score / 10)"],
    "let i = 0": ["let i = 1", "let i = -1", "let i = n"],
    "i < n": ["i <= n", "i < n - 1", "i > n"],
    "i++": ["i += 2", "i = i + 1", "++i"],
    "let i = 0; i < n; i++": ["let i = 1; i < n; i++", "let i = 0; i < n; i += 2", "let i = 0; i <= n; i++"],
    "const k in obj": ["const k of Object.keys(obj)", "const k in {}", "const k in Object"],
    "const k of keys": ["const k of keys.slice(1)", "const k in keys", "const k of keys.reverse()"],
    "const ch of s.toLowerCase()": ["const ch of s", "const ch of s.toUpperCase()", "const ch of s.slice(1)"],
    "Math.max(x, lo), hi": ["Math.max(x, lo), lo", "x, hi", "Math.max(x, hi), lo"],
    "x, lo": ["x, hi", "lo, x", "x, lo, hi"],
    # a non-removing callee here would make drain() grow without bound
    "this.items.shift": ["this.items.pop", "this.items.shift.bind(this.items)", "Array.prototype.pop.bind(this.items)"],
}

METHODS = {
    "push": "unshift",
    "shift": "pop",
    "slice": "substring",
    "charAt": "charCodeAt",
    "toUpperCase": "toLowerCase",
    "toLowerCase": "toUpperCase",
    "indexOf": "lastIndexOf",
    "map": "filter",
    "join": "concat",
    "floor": "ceil",
    "abs": "sign",
    "min": "max",
    "max": "min",
    "call": "apply",
    "pop": "shift",
}


def callee_variants(orig):
    head, _, name = orig.rpartition(".")
    alt = METHODS.get(name, name + "s")
    return [f"{head}.{alt}" if head else alt, f"{head}.toString" if head else "String", orig + ".bind(null)"]


def argument_variants(orig):
    if re.fullmatch(r"-?\d+", orig):
        n = int(orig)
        return [str(n + 1), str(n - 1), "null"]
    if orig == "''":
        return ["','", "' '", "undefined"]
    if "/" in orig:
        left, right = [p.strip() for p in orig.split("/", 1)]
        return [f"{left} * {right}", f"{left} / 100", f"{right} / {left}"]
    return [f"{orig}, {orig}", "undefined", f"[{orig}]"]


def left_variants(orig):
    decl, name = orig.split()
    return [f"var {name}", f"let {name}", f"const {name}_"]


def right_variants(orig):
    return [f"{orig}.slice(1)", "[]", f"Object.keys({orig})"]


def variants(kind, orig):
    if orig in SPECIFIC:
        return list(SPECIFIC[orig])
    if kind == "CallCallee":
        return callee_variants(orig)
    if kind.startswith("CallArgument") or kind == "CallAllArguments":
        return argument_variants(orig)
    if kind in ("ForInLeft", "ForOfLeft"):
        return left_variants(orig)
    if kind in ("ForInRight", "ForOfRight"):
        return right_variants(orig)
    return [f"!({orig})", "true", "false"]


def completion(options):
    parts = []
    for i, opt in enumerate(options, 1):
        parts.append(
            f"Option {i}: The PLACEHOLDER can be replaced with:\n```\n{opt}\n```\n"
            f"This would result in different behavior because it changes the fragment.\n"
        )
    return "\n".join(parts) + "\nDONE."


def original_of(user_text):
    m = re.search(r"which was:\n```\n(.*?)\n```", user_text, re.S)
    return m.group(1)


def main(prompts_dir, out_path):
    responses = {}
    for path in sorted(glob.glob(os.path.join(prompts_dir, "*.json"))):
        with open(path) as f:
            p = json.load(f)
        pid, kind, user = p["id"], p["kind"], p["user_text"]
        orig = original_of(user)
        opts = variants(kind, orig)
        if pid % 7 == 0:
            opts[2] = orig
        elif pid % 5 == 0:
            opts[2] = opts[0]
        if pid % 6 == 0:
            opts[1] = opts[1] + " )("
        content = completion(opts)
        if pid % 23 == 0:
            content = "I am not able to suggest a change for this fragment."
        entry = {
            "content": content,
            "usage": {
                "prompt_tokens": (len(p["system_text"]) + len(user)) // 4,
                "completion_tokens": len(content) // 4,
                "total_tokens": (len(p["system_text"]) + len(user)) // 4 + len(content) // 4,
            },
        }
        if pid == 3:
            entry["errors"] = [429]
        responses[hashlib.sha256(user.encode()).hexdigest()] = entry
    with open(out_path, "w") as f:
        json.dump({"default": "", "responses": responses}, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
