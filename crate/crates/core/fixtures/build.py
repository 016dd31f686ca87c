#!/usr/bin/env python3
"""Compiles the fixture sources in src/ into contract bundles.

The compiler accepts a small Solidity subset: one contract plus interfaces,
uint/address/bool state variables and mappings, modifiers without
arguments, public functions with word parameters, and internal functions
(inlined at each call site). Output is line assembly with labels, a source
map with one entry per pc, and the function table.

Usage: python3 build.py [--check]
"""

import hashlib
import json
import os
import re
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
SRC = os.path.join(HERE, "src")

MASK = (1 << 256) - 1


# ---------------------------------------------------------------- lexing

TOKEN = re.compile(
    r"\s+|//[^\n]*|/\*.*?\*/"
    r"|(?P<num>0x[0-9a-fA-F]+|\d+)"
    r"|(?P<str>\"[^\"]*\")"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|\+\+|--|\+=|-=|\*=|/=|==|!=|<=|>=|&&|\|\||=>|[{}()\[\];,.=<>+\-*/%!?:^])",
    re.S,
)


class Tok:
    def __init__(self, kind, text, start):
        self.kind, self.text, self.start = kind, text, start
        self.end = start + len(text)

    def __repr__(self):
        return f"{self.kind}:{self.text}@{self.start}"


def lex(text):
    out = []
    pos = 0
    while pos < len(text):
        m = TOKEN.match(text, pos)
        if not m:
            raise SyntaxError(f"bad character at {pos}: {text[pos:pos + 10]!r}")
        if m.lastgroup:
            out.append(Tok(m.lastgroup, m.group(m.lastgroup), m.start()))
        pos = m.end()
    out.append(Tok("eof", "", len(text)))
    return out


# ---------------------------------------------------------------- parsing


class Node:
    def __init__(self, kind, start, end, **kw):
        self.kind, self.start, self.end = kind, start, end
        self.__dict__.update(kw)

    def __repr__(self):
        return f"<{self.kind} {self.start}:{self.end}>"


TYPES = {"uint", "uint256", "uint8", "uint128", "address", "bool", "bytes32", "int", "int256"}
VISIBILITY = {"public", "external", "internal", "private", "view", "pure", "payable", "constant"}


class Parser:
    def __init__(self, text):
        self.text = text
        self.toks = lex(text)
        self.i = 0
        self.interfaces = {}
        self.state = []
        self.modifiers = {}
        self.functions = []
        self.contract = None

    def peek(self, k=0):
        return self.toks[self.i + k]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def at(self, text):
        return self.peek().text == text

    def accept(self, text):
        if self.at(text):
            return self.next()
        return None

    def expect(self, text):
        t = self.next()
        if t.text != text:
            raise SyntaxError(f"expected {text!r}, got {t.text!r} at {t.start}")
        return t

    def ident(self):
        t = self.next()
        if t.kind != "id":
            raise SyntaxError(f"expected identifier at {t.start}, got {t.text!r}")
        return t

    # -- top level

    def parse(self):
        while self.peek().kind != "eof":
            if self.accept("pragma"):
                while not self.accept(";"):
                    self.next()
            elif self.at("interface"):
                self.interface()
            elif self.at("contract"):
                self.contract_def()
            else:
                raise SyntaxError(f"unexpected {self.peek()!r}")
        return self

    def interface(self):
        self.expect("interface")
        name = self.ident().text
        self.expect("{")
        methods = {}
        while not self.accept("}"):
            self.expect("function")
            fname = self.ident().text
            params = self.params()
            while not self.accept(";"):
                self.next()
            methods[fname] = selector(fname, [p[0] for p in params])
        self.interfaces[name] = methods

    def type_name(self):
        t = self.next()
        if t.text == "mapping":
            self.expect("(")
            self.type_name()
            self.expect("=>")
            inner = self.type_name()
            self.expect(")")
            return ("mapping", inner)
        if t.text not in TYPES:
            raise SyntaxError(f"unknown type {t.text!r} at {t.start}")
        self.accept("payable")
        return t.text

    def params(self):
        self.expect("(")
        out = []
        while not self.accept(")"):
            ty = self.type_name()
            name = self.ident().text if self.peek().kind == "id" else None
            out.append((ty, name))
            self.accept(",")
        return out

    def contract_def(self):
        start = self.expect("contract").start
        self.contract = self.ident().text
        self.expect("{")
        while not self.at("}"):
            if self.at("function"):
                self.function()
            elif self.at("modifier"):
                self.modifier()
            elif self.at("event"):
                while not self.accept(";"):
                    self.next()
            else:
                self.state_var()
        end = self.expect("}").end
        self.contract_span = (start, end)

    def state_var(self):
        start = self.peek().start
        ty = self.type_name()
        constant = False
        while self.peek().text in VISIBILITY:
            constant |= self.next().text == "constant"
        name = self.ident().text
        init = None
        if self.accept("="):
            init = self.expr()
        self.expect(";")
        self.state.append(Node("StateVariable", start, self.toks[self.i - 1].end,
                               ty=ty, name=name, constant=constant, init=init))

    def modifier(self):
        start = self.expect("modifier").start
        name = self.ident().text
        if self.at("("):
            if self.params():
                raise SyntaxError("modifiers with parameters are not supported")
        body = self.block()
        self.modifiers[name] = Node("ModifierDefinition", start, body.end, name=name, body=body)

    def function(self):
        start = self.expect("function").start
        name = self.ident().text
        params = self.params()
        vis = set()
        mods = []
        returns = []
        while not self.at("{"):
            if self.accept("returns"):
                returns = self.params()
            elif self.peek().text in VISIBILITY:
                vis.add(self.next().text)
            else:
                mods.append(self.ident().text)
                if self.at("("):
                    self.expect("(")
                    self.expect(")")
        body = self.block()
        self.functions.append(Node("FunctionDefinition", start, body.end, name=name, params=params,
                                   visibility=vis, modifiers=mods, returns=returns, body=body))

    # -- statements

    def block(self):
        start = self.expect("{").start
        stmts = []
        while not self.at("}"):
            stmts.append(self.statement())
        end = self.expect("}").end
        return Node("Block", start, end, stmts=stmts)

    def statement(self):
        t = self.peek()
        start = t.start
        if t.text == "{":
            return self.block()
        if t.text == "if":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.statement()
            other = None
            if self.accept("else"):
                other = self.statement()
            return Node("IfStatement", start, (other or then).end, cond=cond, then=then, other=other)
        if t.text == "while":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.statement()
            return Node("WhileStatement", start, body.end, cond=cond, body=body)
        if t.text == "for":
            self.next()
            self.expect("(")
            init = None if self.at(";") else self.simple_statement()
            self.expect(";")
            cond = self.expr()
            self.expect(";")
            update = None if self.at(")") else self.simple_statement()
            self.expect(")")
            body = self.statement()
            return Node("ForStatement", start, body.end, init=init, cond=cond, update=update, body=body)
        if t.text == "_" and self.peek(1).text == ";":
            self.next()
            end = self.next().end
            return Node("PlaceholderStatement", start, end)
        if t.text == "break":
            self.next()
            end = self.expect(";").end
            return Node("Break", start, end)
        if t.text == "return":
            self.next()
            value = None if self.at(";") else self.expr()
            end = self.expect(";").end
            return Node("Return", start, end, value=value)
        if t.text == "emit":
            self.next()
            call = self.expr()
            end = self.expect(";").end
            return Node("EmitStatement", start, end, call=call)
        s = self.simple_statement()
        self.expect(";")
        return s

    def simple_statement(self):
        t = self.peek()
        start = t.start
        if t.text in TYPES and self.peek(1).kind == "id":
            self.type_name()
            name = self.ident().text
            init = None
            if self.accept("="):
                init = self.expr()
            end = (init.end if init else self.toks[self.i - 1].end)
            return Node("VariableDeclarationStatement", start, end, name=name, init=init)
        if t.text in ("++", "--"):
            self.next()
            target = self.postfix()
            return Node("UnaryOperation", start, target.end, op=t.text, target=target, prefix=True)
        e = self.expr()
        if self.peek().text in ("=", "+=", "-=", "*=", "/="):
            op = self.next().text
            value = self.expr()
            return Node("Assignment", start, value.end, op=op, target=e, value=value)
        if self.peek().text in ("++", "--"):
            op = self.next()
            return Node("UnaryOperation", start, op.end, op=op.text, target=e, prefix=False)
        return Node("ExpressionStatement", start, e.end, expr=e)

    # -- expressions

    BINARY = [
        ["||"],
        ["&&"],
        ["==", "!="],
        ["<", ">", "<=", ">="],
        ["+", "-"],
        ["*", "/", "%"],
        ["**"],
    ]

    def expr(self, level=0):
        if level == len(self.BINARY):
            return self.unary()
        left = self.expr(level + 1)
        while self.peek().text in self.BINARY[level]:
            op = self.next().text
            right = self.expr(level + 1)
            left = Node("BinaryOperation", left.start, right.end, op=op, left=left, right=right)
        return left

    def unary(self):
        t = self.peek()
        if t.text == "!":
            self.next()
            e = self.unary()
            return Node("UnaryOperation", t.start, e.end, op="!", target=e, prefix=True)
        return self.postfix()

    def postfix(self):
        e = self.primary()
        while True:
            if self.accept("."):
                name = self.ident()
                e = Node("MemberAccess", e.start, name.end, obj=e, name=name.text)
            elif self.accept("["):
                key = self.expr()
                end = self.expect("]").end
                e = Node("IndexAccess", e.start, end, base=e, key=key)
            elif self.accept("("):
                args = []
                while not self.at(")"):
                    args.append(self.expr())
                    self.accept(",")
                end = self.expect(")").end
                e = Node("FunctionCall", e.start, end, callee=e, args=args)
            else:
                return e

    def primary(self):
        t = self.next()
        if t.kind == "num":
            return Node("Literal", t.start, t.end, value=int(t.text, 0))
        if t.kind == "str":
            return Node("Literal", t.start, t.end, value=0)
        if t.text in ("true", "false"):
            return Node("Literal", t.start, t.end, value=int(t.text == "true"))
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id":
            return Node("Identifier", t.start, t.end, name=t.text)
        raise SyntaxError(f"unexpected {t.text!r} at {t.start}")


def selector(name, types):
    canon = {"uint": "uint256", "int": "int256"}
    sig = f"{name}({','.join(canon.get(t, t) if isinstance(t, str) else 'mapping' for t in types)})"
    return int.from_bytes(hashlib.sha3_256(sig.encode()).digest()[:4], "big")


# ---------------------------------------------------------------- codegen

EFFECT = {
    "STOP": (0, 0), "RETURN": (2, 0), "REVERT": (2, 0), "INVALID": (0, 0), "SELFDESTRUCT": (1, 0),
    "POP": (1, 0), "ISZERO": (1, 1), "NOT": (1, 1), "CALLDATALOAD": (1, 1), "BALANCE": (1, 1),
    "MLOAD": (1, 1), "SLOAD": (1, 1), "SHA3": (2, 1), "MSTORE": (2, 0), "SSTORE": (2, 0),
    "JUMPI": (2, 0), "JUMP": (1, 0), "JUMPDEST": (0, 0), "PUSH": (0, 1),
    "CALL": (7, 1), "STATICCALL": (6, 1), "LOG0": (2, 0),
}
for _op in ["ADD", "SUB", "MUL", "DIV", "MOD", "EXP", "LT", "GT", "EQ", "AND", "OR", "SHR"]:
    EFFECT[_op] = (2, 1)
for _op in ["CALLER", "CALLVALUE", "ORIGIN", "TIMESTAMP", "SELFBALANCE", "ADDRESS", "GAS"]:
    EFFECT[_op] = (0, 1)

ARITH = {"+": "ADD", "-": "SUB", "*": "MUL", "/": "DIV", "%": "MOD", "**": "EXP"}
INJECTED = "InjectedCheck"


def effect(op):
    if op.startswith("DUP"):
        return (0, 1)
    if op.startswith("SWAP"):
        return (0, 0)
    return EFFECT[op]


class Gen:
    def __init__(self, parser, static_calls=False):
        self.p = parser
        self.static_calls = static_calls
        self.ops = []  # (label or None, mnemonic, immediate, node kind, start, length)
        self.pending_label = None
        self.depth = 0
        self.scopes = []
        self.nodes = []
        self.label_count = 0
        self.slots = {}
        self.constants = {}
        self.storage = {}
        self.inline = []  # frames of inlined functions: (ret position, end label, used)
        self.loops = []  # (depth at loop entry, break label)
        self.injected = False
        self.public_ret = None
        slot = 0
        for v in parser.state:
            if v.constant:
                self.constants[v.name] = v.init.value
                continue
            self.slots[v.name] = slot
            if v.init is not None and v.init.value:
                self.storage[slot] = v.init.value
            slot += 1
        self.callable = {f.name: f for f in parser.functions}

    # -- emission

    def label(self, hint):
        self.label_count += 1
        return f"{hint}_{self.label_count}"

    def place(self, label):
        assert self.pending_label is None
        self.pending_label = label
        self.emit("JUMPDEST")

    def emit(self, op, imm=None, node=None):
        node = node or self.nodes[-1]
        kind = node[0]
        self.ops.append((self.pending_label, op, imm, kind, node[1], node[2]))
        self.pending_label = None
        pops, pushes = effect(op)
        self.depth += pushes - pops

    def push(self, v):
        self.emit("PUSH", v)

    def enter(self, n, kind=None):
        self.nodes.append((kind or n.kind, n.start, n.end - n.start))

    def leave(self):
        self.nodes.pop()

    def pops(self, k):
        for _ in range(k):
            self.emit("POP")

    # -- locals

    def declare(self, name):
        self.scopes[-1][name] = self.depth - 1

    def lookup(self, name):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def load_local(self, pos):
        self.emit(f"DUP{self.depth - pos}")

    def store_local(self, pos):
        self.emit(f"SWAP{self.depth - 1 - pos}")
        self.emit("POP")

    def open_scope(self):
        self.scopes.append({})
        return self.depth

    def close_scope(self, depth):
        self.scopes.pop()
        self.pops(self.depth - depth)

    # -- program

    def program(self):
        public = [f for f in self.p.functions if not f.visibility & {"internal", "private"}]
        self.nodes.append(("ContractDefinition", self.p.contract_span[0],
                           self.p.contract_span[1] - self.p.contract_span[0]))
        self.push(0)
        self.emit("CALLDATALOAD")
        self.push(0xE0)
        self.emit("SHR")
        sels = {}
        for f in public:
            sels[f.name] = selector(f.name, [t for t, _ in f.params])
            self.emit("DUP1")
            self.push(sels[f.name])
            self.emit("EQ")
            self.emit("PUSH", "@fn_" + f.name)
            self.emit("JUMPI")
        self.push(0)
        self.push(0)
        self.emit("REVERT")
        table = []
        for f in public:
            first = len(self.ops)
            self.public_function(f)
            table.append({"name": f.name, "pc_start": first, "pc_end": len(self.ops) - 1,
                          "selector": f"0x{sels[f.name]:08x}"})
        return table, sels

    def public_function(self, f):
        self.depth = 1
        self.scopes = [{}]
        self.enter(f)
        self.pending_label = "fn_" + f.name
        self.emit("JUMPDEST")
        self.emit("POP")
        for i, (_, name) in enumerate(f.params):
            self.push(4 + 32 * i)
            self.emit("CALLDATALOAD")
            self.declare(name)
        mods = [self.p.modifiers[m] for m in f.modifiers]
        ret = self.label("ret")
        self.public_ret = [ret, False, self.depth]
        for m in mods:
            self.modifier_part(m, 0)
        self.statement(f.body)
        if self.public_ret[1]:
            self.place(ret)
        for m in reversed(mods):
            self.modifier_part(m, 1)
        self.pops(self.depth)
        if f.returns:
            self.push(0x20)
            self.push(0x60)
            self.emit("RETURN")
        else:
            self.emit("STOP")
        self.leave()

    def modifier_part(self, m, part):
        stmts = m.body.stmts
        cut = [i for i, s in enumerate(stmts) if s.kind == "PlaceholderStatement"]
        if len(cut) != 1:
            raise SyntaxError(f"modifier {m.name} needs exactly one placeholder")
        body = stmts[:cut[0]] if part == 0 else stmts[cut[0] + 1:]
        saved = self.injected
        self.injected = m.name == "nonReentrant"
        self.enter(m)
        for s in body:
            self.statement(s)
        self.leave()
        self.injected = saved

    # -- statements

    def statement(self, s):
        self.enter(s)
        getattr(self, "s_" + s.kind)(s)
        self.leave()

    def s_Block(self, s):
        d = self.open_scope()
        for st in s.stmts:
            self.statement(st)
        self.close_scope(d)

    def s_VariableDeclarationStatement(self, s):
        if s.init is None:
            self.push(0)
        else:
            self.expr(s.init)
        self.declare(s.name)

    def s_ExpressionStatement(self, s):
        e = s.expr
        if e.kind == "FunctionCall" and e.callee.kind == "Identifier":
            name = e.callee.name
            if name in ("require", "assert"):
                return self.check(e)
            if name == "revert":
                self.enter(e)
                self.push(0)
                self.push(0)
                self.emit("REVERT")
                self.leave()
                return
            if name == "selfdestruct":
                self.enter(e)
                self.expr(e.args[0])
                self.emit("SELFDESTRUCT")
                self.leave()
                return
        before = self.depth
        self.expr(e)
        self.pops(self.depth - before)

    def check(self, call):
        kind = INJECTED if self.injected else None
        self.expr(call.args[0])
        self.enter(call, kind)
        ok = self.label("ok")
        self.emit("PUSH", "@" + ok)
        self.emit("JUMPI")
        self.push(0)
        self.push(0)
        self.emit("REVERT")
        self.place(ok)
        self.leave()

    def s_EmitStatement(self, s):
        args = s.call.args
        self.to_memory(args, 0x80)
        self.push(32 * len(args))
        self.push(0x80)
        self.emit("LOG0")

    def s_IfStatement(self, s):
        self.expr(s.cond)
        self.emit("ISZERO")
        other = self.label("else")
        self.emit("PUSH", "@" + other)
        self.emit("JUMPI")
        self.statement(s.then)
        if s.other is None:
            self.place(other)
            return
        end = self.label("endif")
        self.emit("PUSH", "@" + end)
        self.emit("JUMP")
        self.place(other)
        self.statement(s.other)
        self.place(end)

    def loop(self, cond, body, update):
        head, end = self.label("loop"), self.label("endloop")
        self.place(head)
        self.expr(cond)
        self.emit("ISZERO")
        self.emit("PUSH", "@" + end)
        self.emit("JUMPI")
        self.loops.append((self.depth, end))
        self.statement(body)
        self.loops.pop()
        if update is not None:
            self.statement(update)
        self.emit("PUSH", "@" + head)
        self.emit("JUMP")
        self.place(end)

    def s_WhileStatement(self, s):
        self.loop(s.cond, s.body, None)

    def s_ForStatement(self, s):
        d = self.open_scope()
        if s.init is not None:
            self.statement(s.init)
        self.loop(s.cond, s.body, s.update)
        self.close_scope(d)

    def s_Break(self, s):
        depth, end = self.loops[-1]
        here = self.depth
        self.pops(self.depth - depth)
        self.emit("PUSH", "@" + end)
        self.emit("JUMP")
        self.depth = here

    def s_Return(self, s):
        here = self.depth
        if self.inline:
            frame = self.inline[-1]
            if s.value is not None:
                self.expr(s.value)
                self.store_local(frame["ret"])
            self.pops(self.depth - frame["ret"] - 1)
            if not (frame["tail"] is s):
                frame["used"] = True
                self.emit("PUSH", "@" + frame["end"])
                self.emit("JUMP")
                self.depth = here
            return
        ret, _, base = self.public_ret
        if s.value is not None:
            self.expr(s.value)
            self.push(0x60)
            self.emit("MSTORE")
        self.pops(self.depth - base)
        self.public_ret[1] = True
        self.emit("PUSH", "@" + ret)
        self.emit("JUMP")
        self.depth = here

    def s_PlaceholderStatement(self, s):
        raise SyntaxError("placeholder outside a modifier")

    def s_Assignment(self, s):
        t, op = s.target, s.op
        arith = ARITH.get(op[:-1]) if op != "=" else None
        if t.kind == "Identifier" and self.lookup(t.name) is not None:
            self.expr(s.value)
            if arith:
                self.load_local(self.lookup(t.name))
                self.emit(arith)
            self.store_local(self.lookup(t.name))
        elif t.kind == "Identifier":
            slot = self.slots[t.name]
            self.expr(s.value)
            if arith:
                self.push(slot)
                self.emit("SLOAD")
                self.emit(arith)
            self.push(slot)
            self.emit("SSTORE")
        elif t.kind == "IndexAccess":
            if arith:
                self.slot_of(t)
                self.expr(s.value)
                self.emit("DUP2")
                self.emit("SLOAD")
                self.emit(arith)
                self.emit("SWAP1")
                self.emit("SSTORE")
            else:
                self.expr(s.value)
                self.slot_of(t)
                self.emit("SSTORE")
        else:
            raise SyntaxError(f"cannot assign to {t.kind}")

    def s_UnaryOperation(self, s):
        t = s.target
        arith = "ADD" if s.op == "++" else "SUB"
        if t.kind == "Identifier" and self.lookup(t.name) is not None:
            self.push(1)
            self.load_local(self.lookup(t.name))
            self.emit(arith)
            self.store_local(self.lookup(t.name))
        elif t.kind == "Identifier":
            slot = self.slots[t.name]
            self.push(1)
            self.push(slot)
            self.emit("SLOAD")
            self.emit(arith)
            self.push(slot)
            self.emit("SSTORE")
        else:
            self.slot_of(t)
            self.push(1)
            self.emit("DUP2")
            self.emit("SLOAD")
            self.emit(arith)
            self.emit("SWAP1")
            self.emit("SSTORE")

    # -- expressions

    def expr(self, e):
        self.enter(e)
        getattr(self, "e_" + e.kind)(e)
        self.leave()

    def e_Literal(self, e):
        self.push(e.value)

    def e_Identifier(self, e):
        pos = self.lookup(e.name)
        if pos is not None:
            self.load_local(pos)
        elif e.name in self.constants:
            self.push(self.constants[e.name])
        elif e.name in self.slots:
            self.push(self.slots[e.name])
            self.emit("SLOAD")
        elif e.name == "now":
            self.emit("TIMESTAMP")
        else:
            raise SyntaxError(f"unknown identifier {e.name}")

    def e_MemberAccess(self, e):
        o = e.obj
        env = {("msg", "sender"): "CALLER", ("msg", "value"): "CALLVALUE", ("tx", "origin"): "ORIGIN",
               ("block", "timestamp"): "TIMESTAMP", ("this", "balance"): "SELFBALANCE"}
        if o.kind == "Identifier" and (o.name, e.name) in env:
            self.emit(env[(o.name, e.name)])
        elif e.name == "balance" and o.kind == "FunctionCall" and o.args and o.args[0].kind == "Identifier" \
                and o.args[0].name == "this":
            self.emit("SELFBALANCE")
        elif e.name == "balance":
            self.expr(o)
            self.emit("BALANCE")
        else:
            raise SyntaxError(f"unsupported member {e.name}")

    def e_IndexAccess(self, e):
        self.slot_of(e)
        self.emit("SLOAD")

    def slot_of(self, e):
        b = e.base
        if b.kind == "Identifier":
            self.push(self.slots[b.name])
        elif b.kind == "IndexAccess":
            self.slot_of(b)
        else:
            raise SyntaxError("unsupported mapping base")
        self.expr(e.key)
        self.push(0)
        self.emit("MSTORE")
        self.push(0x20)
        self.emit("MSTORE")
        self.push(0x40)
        self.push(0)
        self.emit("SHA3")

    def e_UnaryOperation(self, e):
        if e.op != "!":
            raise SyntaxError("increment inside an expression is not supported")
        self.expr(e.target)
        self.emit("ISZERO")

    def e_BinaryOperation(self, e):
        op = e.op
        self.expr(e.right)
        self.expr(e.left)
        if op in ARITH:
            self.emit(ARITH[op])
        elif op in ("<", ">", "=="):
            self.emit({"<": "LT", ">": "GT", "==": "EQ"}[op])
        elif op in ("<=", ">=", "!="):
            self.emit({"<=": "GT", ">=": "LT", "!=": "EQ"}[op])
            self.emit("ISZERO")
        elif op == "&&":
            self.emit("AND")
        elif op == "||":
            self.emit("OR")
        else:
            raise SyntaxError(f"operator {op}")

    def to_memory(self, args, base):
        for a in args:
            self.expr(a)
        for i in reversed(range(len(args))):
            self.push(base + 32 * i)
            self.emit("MSTORE")

    def call_op(self, target, value, args_off, args_len, ret_off, ret_len):
        """Pushes a CALL (or STATICCALL) leaving the success flag."""
        self.push(ret_len)
        self.push(ret_off)
        self.push(args_len)
        self.push(args_off)
        if self.static_calls:
            target()
            self.emit("GAS")
            self.emit("STATICCALL")
        else:
            value()
            target()
            self.emit("GAS")
            self.emit("CALL")

    def require_top(self):
        ok = self.label("ok")
        self.emit("PUSH", "@" + ok)
        self.emit("JUMPI")
        self.push(0)
        self.push(0)
        self.emit("REVERT")
        self.place(ok)

    def e_FunctionCall(self, e):
        c = e.callee
        if c.kind == "Identifier":
            name = c.name
            if name in ("keccak256", "sha3"):
                self.to_memory(e.args, 0x80)
                self.push(32 * len(e.args))
                self.push(0x80)
                self.emit("SHA3")
            elif name == "ecrecover":
                self.to_memory(e.args, 0x80)
                self.push(0x20)
                self.push(0x80)
                self.push(0x80)
                self.push(0x80)
                self.push(0)
                self.push(1)
                self.emit("GAS")
                self.emit("CALL")
                self.emit("POP")
                self.push(0x80)
                self.emit("MLOAD")
            elif name in ("address", "uint", "uint256") or name in self.p.interfaces:
                self.expr(e.args[0])
            elif name in self.callable:
                self.inline_call(self.callable[name], e.args)
            else:
                raise SyntaxError(f"unknown function {name}")
            return
        if c.kind == "MemberAccess":
            obj, m = c.obj, c.name
            if m in ("transfer", "send"):
                self.call_op(lambda: self.expr(obj), lambda: self.expr(e.args[0]), 0, 0, 0, 0)
                if m == "transfer":
                    self.require_top()
                return
            if m == "call":
                self.call_op(lambda: self.expr(obj), lambda: self.push(0), 0, 0, 0, 0)
                return
            if obj.kind == "FunctionCall" and obj.callee.kind == "Identifier" \
                    and obj.callee.name in self.p.interfaces:
                sel = self.p.interfaces[obj.callee.name][m]
                self.to_memory(e.args, 0xA0)
                self.push(sel << 224)
                self.push(0x80)
                self.emit("MSTORE")
                self.call_op(lambda: self.expr(obj.args[0]), lambda: self.push(0),
                             0x80, 0x20 * (len(e.args) + 1), 0x80, 0x20)
                self.require_top()
                self.push(0x80)
                self.emit("MLOAD")
                return
        if c.kind == "FunctionCall" and c.callee.kind == "MemberAccess" and c.callee.name == "value" \
                and c.callee.obj.kind == "MemberAccess" and c.callee.obj.name == "call":
            target = c.callee.obj.obj
            self.call_op(lambda: self.expr(target), lambda: self.expr(c.args[0]), 0, 0, 0, 0)
            return
        raise SyntaxError(f"unsupported call at {e.start}")

    def inline_call(self, f, args):
        ret = self.depth
        self.push(0)
        # Arguments are evaluated in the caller's scope.
        for a in args:
            self.expr(a)
        saved_scopes, saved_loops, saved_injected = self.scopes, self.loops, self.injected
        self.scopes = [{name: ret + 1 + i for i, (_, name) in enumerate(f.params)}]
        self.loops = []
        self.injected = f.name.endswith("_uint256")
        stmts = f.body.stmts
        tail = stmts[-1] if stmts and stmts[-1].kind == "Return" else None
        frame = {"ret": ret, "end": self.label("end_" + f.name), "used": False, "tail": tail}
        self.inline.append(frame)
        self.enter(f)
        for s in stmts:
            self.statement(s)
        if tail is None:
            self.pops(self.depth - ret - 1)
        self.depth = ret + 1
        if frame["used"]:
            self.place(frame["end"])
        self.leave()
        self.inline.pop()
        self.scopes, self.loops, self.injected = saved_scopes, saved_loops, saved_injected


def assemble(ops):
    lines = []
    for label, op, imm, _, _, _ in ops:
        text = op
        if imm is not None:
            text += " " + (imm if isinstance(imm, str) else hex(imm & MASK))
        if label:
            text = f"@{label}: {text}"
        lines.append(text)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- bundles


def word(v):
    return (v & MASK).to_bytes(32, "big")


def mapping_slot(key, slot):
    return int.from_bytes(hashlib.sha256(word(key) + word(slot)).digest(), "big")


def hexw(v):
    return hex(v & MASK)


def compile_source(path, static_calls=False):
    text = open(path).read()
    p = Parser(text).parse()
    g = Gen(p, static_calls)
    table, sels = g.program()
    smap = [{"pc": pc, "start": s, "length": n, "node": k} for pc, (_, _, _, k, s, n) in enumerate(g.ops)]
    return {
        "text": text,
        "parser": p,
        "gen": g,
        "assembly": assemble(g.ops),
        "sourcemap": smap,
        "functions": table,
        "selectors": sels,
    }


def calldata(c, fn, args):
    f = next(f for f in c["parser"].functions if f.name == fn)
    assert len(f.params) == len(args), fn
    return "0x" + (c["selectors"][fn].to_bytes(4, "big") + b"".join(word(a) for a in args)).hex()


def stub(c, s):
    if "value" in s:
        return hexw(s["value"])
    if "returns" in s:
        return {"returns": hexw(s["returns"])}
    fn, args = s["reenter"]
    return {"reenter": calldata(c, fn, args)}


def transaction(c, tx):
    out = {"calldata": calldata(c, tx["fn"], tx.get("args", []))}
    for k in ("origin", "caller", "callvalue", "timestamp"):
        if k in tx:
            out[k] = hexw(tx[k])
    if tx.get("stubs"):
        out["call_results"] = [stub(c, s) for s in tx["stubs"]]
    return out


def initial_storage(c, entries):
    g = c["gen"]
    st = dict(g.storage)
    for key, v in entries.items():
        if isinstance(key, tuple):
            name, k = key
            st[mapping_slot(k, g.slots[name])] = v
        else:
            st[g.slots[key]] = v
    return {hexw(k): hexw(v) for k, v in sorted(st.items()) if v}


def bundle(name, c, entry):
    b = {
        "name": name,
        "assembly": c["assembly"],
        "source": c["text"],
        "sourcemap": c["sourcemap"],
        "functions": c["functions"],
    }
    storage = initial_storage(c, entry.get("storage", {}))
    if storage:
        b["storage"] = storage
    txs = [transaction(c, t) for t in entry.get("txs", [])]
    if txs:
        b["transactions"] = txs
    return b


# ---------------------------------------------------------------- corpus

ALICE, BOB, CAROL = 0x1000, 0x2000, 0x3000
OWNER = 0x1000

FIXTURES = {
    "transfer_proxy": {
        "src": "transfer_proxy.sol",
        "fixed": "transfer_proxy.fixed.sol",
        "storage": {("balances", BOB): 500, ("balances", ALICE): 10},
        "txs": [
            {"fn": "transferProxy", "args": [BOB, CAROL, 100, 5, 27, 1, 2], "stubs": [{"returns": BOB}]},
            {"fn": "transferProxy", "args": [BOB, CAROL, 50, 1, 27, 1, 2], "stubs": [{"returns": ALICE}]},
            {"fn": "transferProxy", "args": [BOB, CAROL, 1 << 255, 1 << 255, 27, 1, 2],
             "stubs": [{"returns": BOB}]},
            {"fn": "transferProxy", "args": [ALICE, BOB, 20, 0, 27, 1, 2], "stubs": [{"returns": ALICE}]},
        ],
    },
    "masburn": {
        "src": "masburn.sol",
        "fixed": "masburn.fixed.sol",
        "storage": {"weeklyLimit": 1000, "weekStartTime": 1_500_000_000, "tokenAddress": 0x70},
        "txs": [
            {"fn": "burn", "args": [100], "stubs": [{"returns": 1}]},
            {"fn": "burn", "args": [300], "stubs": [{"returns": 1}]},
            {"fn": "getThisWeekBurnAmountLeft"},
            {"fn": "burn", "args": [5000], "stubs": [{"returns": 1}]},
            {"fn": "burn", "args": [50], "stubs": [{"reenter": ("burn", [600])}, {"returns": 1}]},
            {"fn": "getThisWeekBurnedAmount"},
        ],
    },
    "transfer": {
        "src": "transfer.sol",
        "storage": {("balances", ALICE): 100},
        "txs": [
            {"fn": "transfer", "args": [BOB, 10]},
            {"fn": "transfer", "args": [BOB, 0]},
            {"fn": "transfer", "args": [BOB, 1000]},
            {"fn": "transfer", "args": [BOB, 5], "caller": BOB},
        ],
    },
    "withdraw": {
        "src": "withdraw.sol",
        "storage": {("balances", ALICE): 100},
        "txs": [
            {"fn": "withdraw"},
            {"fn": "withdraw", "stubs": [{"reenter": ("withdraw", [])}]},
            {"fn": "withdraw", "caller": BOB},
        ],
    },
    "bank": {
        "src": "bank.sol",
        "fixed": "bank.fixed.sol",
        "storage": {("balances", ALICE): 100, ("balances", BOB): 7},
        "txs": [
            {"fn": "transfer", "args": [BOB, 30]},
            {"fn": "withdraw", "caller": BOB},
            {"fn": "withdraw", "stubs": [{"reenter": ("transfer", [CAROL, 70])}]},
            {"fn": "transfer", "args": [CAROL, 1], "caller": CAROL},
        ],
    },
    "bank_guarded": {
        "src": "bank_guarded.sol",
        "fixed": "bank_guarded.fixed.sol",
        "storage": {("balances", ALICE): 100},
        "txs": [
            {"fn": "transfer", "args": [BOB, 30]},
            {"fn": "withdraw"},
            {"fn": "withdraw", "caller": BOB, "stubs": [{"reenter": ("transfer", [CAROL, 30])}]},
        ],
    },
    "bounded_loop": {
        "src": "bounded_loop.sol",
        "txs": [
            {"fn": "run", "args": [98, 97, 99, 0, 0]},
            {"fn": "run", "args": [100, 0, 0, 0, 0]},
        ],
    },
    "single_assignment_loop": {
        "src": "single_assignment_loop.sol",
        "txs": [{"fn": "count", "args": [3]}],
    },
    "wallet": {
        "src": "wallet.sol",
        "fixed": "wallet.fixed.sol",
        "storage": {"owner": OWNER},
        "txs": [
            {"fn": "withdrawAll", "args": [BOB]},
            {"fn": "withdrawAll", "args": [BOB], "caller": CAROL},
            {"fn": "withdrawAll", "args": [CAROL], "origin": CAROL, "caller": CAROL},
        ],
    },
    "bank_static": {
        "src": "bank.sol",
        "static": True,
        "storage": {("balances", ALICE): 100},
        "txs": [{"fn": "withdraw"}, {"fn": "transfer", "args": [BOB, 10]}],
    },
    "wallet_static": {
        "src": "wallet.sol",
        "static": True,
        "storage": {"owner": OWNER},
        "txs": [{"fn": "withdrawAll", "args": [BOB]}],
    },
    "const_arith": {
        "src": "const_arith.sol",
        "txs": [{"fn": "tip", "args": [BOB]}],
    },
    "origin_emit": {
        "src": "origin_emit.sol",
        "txs": [{"fn": "ping"}],
    },
    "payout_targeted": {
        "src": "payout.sol",
        "fixed": "payout.fixed.sol",
        "txs": [
            {"fn": "pay", "args": [BOB, 10, 4]},
            {"fn": "pay", "args": [CAROL, 7, 1]},
            {"fn": "pay", "args": [BOB, 1, 0]},
            {"fn": "pay", "args": [BOB, MASK, 1]},
        ],
    },
    "one_check": {
        "src": "one_check.sol",
        "fixed": "one_check.fixed.sol",
        "txs": [{"fn": "send", "args": [BOB, 41]}],
    },
    "safemath": {
        "src": "safemath.sol",
        "txs": [],
    },
}

# Fixed sources whose lock is deliberately broken.
MUTANTS = {
    "bank_mutant": {"from": "bank", "src": "bank.mutant.sol"},
    "masburn_mutant": {"from": "masburn", "src": "masburn.mutant.sol"},
}


def dump(path, obj):
    text = json.dumps(obj, indent=2) + "\n"
    with open(path, "w") as f:
        f.write(text)
    return text


def main():
    outputs = {}
    for name, entry in FIXTURES.items():
        static = entry.get("static", False)
        c = compile_source(os.path.join(SRC, entry["src"]), static)
        outputs[name] = bundle(name, c, entry)
        if "fixed" in entry:
            cf = compile_source(os.path.join(SRC, entry["fixed"]), static)
            outputs[name + ".fixed"] = bundle(name, cf, entry)
        else:
            outputs[name + ".fixed"] = outputs[name]
    for name, m in MUTANTS.items():
        entry = FIXTURES[m["from"]]
        c = compile_source(os.path.join(SRC, m["src"]))
        outputs[name] = bundle(name, c, entry)
    check = "--check" in sys.argv
    stale = []
    for name, obj in outputs.items():
        path = os.path.join(HERE, name + ".json")
        text = json.dumps(obj, indent=2) + "\n"
        if check:
            if not os.path.exists(path) or open(path).read() != text:
                stale.append(name)
        else:
            dump(path, obj)
    if stale:
        print("stale fixtures: " + ", ".join(stale))
        sys.exit(1)


if __name__ == "__main__":
    main()
