"""Seeded random generators: arbitrary ASTs for round-trip checks and typed,
always-executable programs for the interpreter oracle."""

from __future__ import annotations

import random

from morevqa.lang import (
    Assign,
    BoolLit,
    CallExpr,
    CallStmt,
    Compare,
    FloatLit,
    For,
    If,
    IntLit,
    ListLit,
    Program,
    Return,
    StringLit,
    Var,
)

_WORDS = ["alpha", "beta", "gamma", "delta", "frame", "cat", "ball", "verify"]
_TRICKY_STRINGS = [
    "",
    "plain words",
    'quote " inside',
    "back\\slash",
    "line\nbreak",
    "tab\there",
    "unicode café ∆",
    "  padded  ",
]
_NAMES = ["x", "y", "zed", "frames", "info", "ok", "result", "tmp_1"]
_CMP_OPS = ["==", "!=", "<", "<=", ">", ">="]


def _string(rng: random.Random) -> StringLit:
    if rng.random() < 0.5:
        return StringLit(rng.choice(_TRICKY_STRINGS))
    return StringLit(" ".join(rng.choices(_WORDS, k=rng.randint(1, 3))))


def _number(rng: random.Random):
    if rng.random() < 0.5:
        return IntLit(rng.randint(-1000, 1000))
    return FloatLit(round(rng.uniform(-100.0, 100.0), 4))


def random_expr(rng: random.Random, depth: int = 0):
    """Arbitrary expression, nesting-bounded well under the parser limit."""
    leaf_kinds = ["string", "number", "bool", "var"]
    kinds = leaf_kinds + (["call", "list", "compare"] if depth < 4 else [])
    kind = rng.choice(kinds)
    if kind == "string":
        return _string(rng)
    if kind == "number":
        return _number(rng)
    if kind == "bool":
        return BoolLit(rng.random() < 0.5)
    if kind == "var":
        return Var(rng.choice(_NAMES))
    if kind == "call":
        args = tuple(random_expr(rng, depth + 1) for _ in range(rng.randint(0, 3)))
        return CallExpr(rng.choice(_WORDS), args)
    if kind == "list":
        items = tuple(random_expr(rng, depth + 1) for _ in range(rng.randint(0, 3)))
        return ListLit(items)
    return Compare(
        rng.choice(_CMP_OPS), random_expr(rng, depth + 1), random_expr(rng, depth + 1)
    )


def _random_call_stmt(rng: random.Random) -> CallStmt:
    args = tuple(random_expr(rng, 1) for _ in range(rng.randint(0, 3)))
    return CallStmt(rng.choice(_WORDS), args)


def random_flat_program(rng: random.Random) -> Program:
    stmts = []
    for _ in range(rng.randint(1, 8)):
        if rng.random() < 0.6:
            stmts.append(_random_call_stmt(rng))
        else:
            stmts.append(Assign(rng.choice(_NAMES), random_expr(rng, 1)))
    return Program(tuple(stmts))


def random_extended_program(rng: random.Random, depth: int = 0) -> Program:
    stmts = []
    for _ in range(rng.randint(1, 5 if depth else 8)):
        roll = rng.random()
        if roll < 0.35:
            stmts.append(_random_call_stmt(rng))
        elif roll < 0.6:
            stmts.append(Assign(rng.choice(_NAMES), random_expr(rng, 1)))
        elif roll < 0.75 and depth < 3:
            orelse = random_extended_program(rng, depth + 1) if rng.random() < 0.5 else None
            stmts.append(If(random_expr(rng, 1), random_extended_program(rng, depth + 1), orelse))
        elif roll < 0.9 and depth < 3:
            stmts.append(
                For(rng.choice(_NAMES), random_expr(rng, 1), random_extended_program(rng, depth + 1))
            )
        else:
            stmts.append(Return(random_expr(rng, 1)))
    return Program(tuple(stmts))


# --- typed executable generation ---

def stub_dispatch():
    """Deterministic pure tools with fixed signatures."""
    return {
        "t_int": lambda x: (x * 7 + 3) % 101,
        "t_text": lambda x: f"t{x % 13}",
        "t_join": lambda a, b: f"{a}-{b}",
        "t_flag": lambda x: x % 2 == 0,
        "t_list": lambda x: [x % 5, (x + 1) % 7, x % 3],
        "t_len_ish": lambda xs: len(xs) if isinstance(xs, list) else 0,
    }


class TypedProgramGen:
    """Generates programs guaranteed free of unbound-variable and type errors."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.counter = 0

    def fresh_name(self) -> str:
        self.counter += 1
        return f"v{self.counter}"

    def int_expr(self, env: dict[str, str], depth: int):
        choices = ["lit", "call"]
        if self._vars(env, "int"):
            choices.append("var")
        kind = self.rng.choice(choices if depth < 3 else ["lit"] + (
            ["var"] if self._vars(env, "int") else []))
        if kind == "lit":
            return IntLit(self.rng.randint(0, 50))
        if kind == "var":
            return Var(self.rng.choice(self._vars(env, "int")))
        return CallExpr("t_int", (self.int_expr(env, depth + 1),))

    def str_expr(self, env: dict[str, str], depth: int):
        choices = ["lit"]
        if depth < 3:
            choices += ["text", "join"]
        if self._vars(env, "str"):
            choices.append("var")
        kind = self.rng.choice(choices)
        if kind == "lit":
            return StringLit(self.rng.choice(_WORDS))
        if kind == "var":
            return Var(self.rng.choice(self._vars(env, "str")))
        if kind == "text":
            return CallExpr("t_text", (self.int_expr(env, depth + 1),))
        return CallExpr(
            "t_join", (self.str_expr(env, depth + 1), self.str_expr(env, depth + 1))
        )

    def bool_expr(self, env: dict[str, str], depth: int):
        choices = ["lit", "flag", "cmp_int", "cmp_str"]
        if self._vars(env, "bool"):
            choices.append("var")
        kind = self.rng.choice(choices if depth < 3 else ["lit"])
        if kind == "lit":
            return BoolLit(self.rng.random() < 0.5)
        if kind == "var":
            return Var(self.rng.choice(self._vars(env, "bool")))
        if kind == "flag":
            return CallExpr("t_flag", (self.int_expr(env, depth + 1),))
        if kind == "cmp_int":
            return Compare(
                self.rng.choice(_CMP_OPS),
                self.int_expr(env, depth + 1),
                self.int_expr(env, depth + 1),
            )
        return Compare(
            self.rng.choice(["==", "!="]),
            self.str_expr(env, depth + 1),
            self.str_expr(env, depth + 1),
        )

    def list_expr(self, env: dict[str, str], depth: int):
        choices = ["lit", "call"]
        if self._vars(env, "list"):
            choices.append("var")
        kind = self.rng.choice(choices)
        if kind == "var":
            return Var(self.rng.choice(self._vars(env, "list")))
        if kind == "call" and depth < 3:
            return CallExpr("t_list", (self.int_expr(env, depth + 1),))
        return ListLit(tuple(IntLit(self.rng.randint(0, 20)) for _ in range(self.rng.randint(0, 3))))

    def expr_of(self, type_name: str, env: dict[str, str], depth: int = 0):
        return {
            "int": self.int_expr,
            "str": self.str_expr,
            "bool": self.bool_expr,
            "list": self.list_expr,
        }[type_name](env, depth)

    @staticmethod
    def _vars(env: dict[str, str], type_name: str) -> list[str]:
        return [name for name, t in env.items() if t == type_name]

    def block(self, env: dict[str, str], depth: int, allow_return: bool) -> Program:
        stmts = []
        local = dict(env)
        for _ in range(self.rng.randint(1, 4 if depth else 7)):
            roll = self.rng.random()
            if roll < 0.35:
                if self.rng.random() < 0.7 or not local:
                    name = self.fresh_name()
                    type_name = self.rng.choice(["int", "str", "bool", "list"])
                else:
                    # reassignment keeps the variable's type so that nested
                    # blocks cannot change what enclosing code sees
                    name = self.rng.choice(sorted(local))
                    type_name = local[name]
                stmts.append(Assign(name, self.expr_of(type_name, local)))
                local[name] = type_name
            elif roll < 0.55:
                tool = self.rng.choice(["t_int", "t_text", "t_flag", "t_list"])
                stmts.append(CallStmt(tool, (self.int_expr(local, 1),)))
            elif roll < 0.72 and depth < 2:
                orelse = (
                    self.block(local, depth + 1, allow_return)
                    if self.rng.random() < 0.5
                    else None
                )
                stmts.append(
                    If(self.bool_expr(local, 1), self.block(local, depth + 1, allow_return), orelse)
                )
            elif roll < 0.9 and depth < 2:
                var = self.fresh_name()
                body_env = dict(local)
                body_env[var] = "int"
                stmts.append(For(var, self.list_expr(local, 1), self.block(body_env, depth + 1, allow_return)))
            elif allow_return:
                type_name = self.rng.choice(["int", "str", "bool", "list"])
                stmts.append(Return(self.expr_of(type_name, local)))
            else:
                stmts.append(CallStmt("t_int", (self.int_expr(local, 1),)))
        return Program(tuple(stmts))


def random_executable_program(rng: random.Random) -> Program:
    return TypedProgramGen(rng).block({}, 0, allow_return=True)
