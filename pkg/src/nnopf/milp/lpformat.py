"""Human-readable LP-style dump of a MilpInstance.

Grammar (one item per line, ``\\`` starts a comment line)::

    \\ nnopf-lp v1
    NAME <instance name>
    VARIABLES
      <name> <lo> <hi> [binary]
    MINIMIZE
      obj: <terms>
      constant: <float>
    SUBJECT TO
      <name>: <terms> <sense> <rhs>
    END

``<terms>`` is a whitespace separated list of ``<coef> <name>`` pairs or the
single token ``0`` when empty; ``<sense>`` is one of ``<=``, ``=``, ``>=``.
Floats use Python's shortest round-trip repr, so ``inf`` and ``-inf`` appear
for unbounded sides. Variables are listed in index order and constraints in
insertion order, so a dump/load round trip preserves every index. Names must
not contain whitespace or ``:``.
"""

from __future__ import annotations

from pathlib import Path

from .model import SENSES, MilpInstance

MAGIC = "\\ nnopf-lp v1"


def _terms(instance: MilpInstance, pairs) -> str:
    parts = [f"{float(a)!r} {instance.variables[v].name}" for v, a in pairs]
    return " ".join(parts) if parts else "0"


def format_lp(instance: MilpInstance) -> str:
    for v in instance.variables:
        if any(ch.isspace() for ch in v.name) or ":" in v.name:
            raise ValueError(f"variable name {v.name!r} cannot be written")
    out = [MAGIC, f"NAME {instance.name}", "VARIABLES"]
    for v in instance.variables:
        out.append(f"  {v.name} {v.lo!r} {v.hi!r}" + (" binary" if v.binary else ""))
    out.append("MINIMIZE")
    out.append("  obj: " + _terms(instance, sorted(instance.objective.items())))
    out.append(f"  constant: {instance.obj_constant!r}")
    out.append("SUBJECT TO")
    for c in instance.constraints:
        out.append(f"  {c.name}: {_terms(instance, zip(c.vars, c.coefs))} {c.sense} {c.rhs!r}")
    out.append("END")
    return "\n".join(out) + "\n"


def _parse_terms(tokens: list[str], index: dict[str, int], lineno: int) -> list[tuple[int, float]]:
    if tokens == ["0"]:
        return []
    if len(tokens) % 2:
        raise ValueError(f"line {lineno}: terms must come in <coef> <name> pairs")
    pairs = []
    for a, name in zip(tokens[::2], tokens[1::2]):
        if name not in index:
            raise ValueError(f"line {lineno}: unknown variable {name!r}")
        pairs.append((index[name], float(a)))
    return pairs


def parse_lp(text: str) -> MilpInstance:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ValueError("missing nnopf-lp header")
    inst = MilpInstance()
    index: dict[str, int] = {}
    section = None
    objective: list[tuple[int, float]] = []
    constant = 0.0
    ended = False
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        if ended:
            raise ValueError(f"line {lineno}: content after END")
        if line.startswith("NAME"):
            inst.name = line[4:].strip()
            continue
        if line in ("VARIABLES", "MINIMIZE", "SUBJECT TO"):
            section = line
            continue
        if line == "END":
            ended = True
            continue
        if section == "VARIABLES":
            tok = line.split()
            if len(tok) not in (3, 4) or (len(tok) == 4 and tok[3] != "binary"):
                raise ValueError(f"line {lineno}: expected '<name> <lo> <hi> [binary]'")
            vid = inst.add_var(tok[0], float(tok[1]), float(tok[2]), binary=len(tok) == 4)
            index[tok[0]] = vid
        elif section == "MINIMIZE":
            key, _, rest = line.partition(":")
            if key == "obj":
                objective = _parse_terms(rest.split(), index, lineno)
            elif key == "constant":
                constant = float(rest)
            else:
                raise ValueError(f"line {lineno}: unexpected objective entry {key!r}")
        elif section == "SUBJECT TO":
            name, _, rest = line.partition(":")
            tok = rest.split()
            if len(tok) < 3 or tok[-2] not in SENSES:
                raise ValueError(f"line {lineno}: expected '<name>: <terms> <sense> <rhs>'")
            inst.add_constraint(_parse_terms(tok[:-2], index, lineno), tok[-2], float(tok[-1]), name.strip())
        else:
            raise ValueError(f"line {lineno}: content outside a section")
    if not ended:
        raise ValueError("missing END")
    obj: dict[int, float] = {}
    for v, a in objective:
        obj[v] = obj.get(v, 0.0) + a
    inst.set_objective(obj, constant)
    return inst


def save_lp(path, instance: MilpInstance) -> None:
    Path(path).write_text(format_lp(instance))


def load_lp(path) -> MilpInstance:
    return parse_lp(Path(path).read_text())
