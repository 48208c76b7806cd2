"""Numeric encoding of executable images, shared by both kernels.

Each instruction is four int64 words ``(op, x, y, z)``:

    CONST d val -     ADD..EQ d a b     MOV d a -
    CALL d slot argp  CALLI d freg argp PROCREF d slot -
    LOADG d gslot -   STOREG gslot a -  NEWOBJ d k -
    LOADF d o k       STOREF o k v      PROF cid - -
    BR tgt - -        BRIF c t1 t2      RET a - -

``argp`` indexes the image's argument pool, which holds ``argc`` followed by
the argument registers. Before linking, ``slot``/``gslot`` index the image's
own symbol tables; linking rewrites them to VM table slots.
"""

CONST, ADD, SUB, MUL, DIV, LT, EQ, MOV = range(8)
CALL, CALLI, PROCREF, LOADG, STOREG, NEWOBJ, LOADF, STOREF = range(8, 16)
PROF, BR, BRIF, RET = range(16, 20)

NAMES = ("const", "add", "sub", "mul", "div", "cmp_lt", "cmp_eq", "mov",
         "call", "call_indirect", "proc_ref", "load_global", "store_global", "new_obj",
         "load_field", "store_field", "profile_inc", "br", "br_if", "ret")
BY_NAME = {n: i for i, n in enumerate(NAMES)}

# executed by the VM driver, not the kernel
SLOW = frozenset((CALL, CALLI, RET, NEWOBJ))

# value kinds
K_INT, K_OBJ, K_PROC = 0, 1, 2

# kernel exit reasons (bit set)
R_SLOW, R_SAMPLE, R_BACKEDGE, R_TRAP = 1, 2, 4, 8

# trap codes
T_DIV0, T_TYPE, T_FIELD, T_PROBE = 1, 2, 3, 4
TRAP_TEXT = {T_DIV0: "division by zero", T_TYPE: "operand of wrong kind",
             T_FIELD: "field index out of range", T_PROBE: "profile counter out of range"}

# probe kinds for profile_inc
P_NOP, P_INC, P_ADD, P_COMMIT = 0, 1, 2, 3

FAR = 1 << 62
