"""Hand-written transport procedures with the input ranges they are exercised on."""

CORPUS = """
module corpus
global k = 7
global seen = 0
global fn = &square
global cell = 0

proc square nparams 1 export
block b
  r = mul a0 a0
  ret r

proc const_expr nparams 1 export
block b
  two = const 2
  three = const 3
  five = add two three
  six = mul two three
  t = sub six five
  r = mul a0 t
  q = div r three
  ret q

proc diamond nparams 2 export
block b0
  c = cmp_lt a0 a1
  br_if c l r
block l
  x = sub a1 a0
  br j
block r
  x = sub a0 a1
  br j
block j
  ret x

proc redundant nparams 2 export
block b0
  p = mul a0 a1
  q = mul a1 a0
  s = add p q
  u = mul a0 a1
  v = add s u
  dead = mul v v
  dead2 = add dead p
  ret v

proc sum_to nparams 1 export
block b0
  s = const 0
  i = const 0
  one = const 1
  br head
block head
  c = cmp_lt i a0
  br_if c body done
block body
  s = add s i
  i = add i one
  br head
block done
  ret s

proc swap_loop nparams 2 export
block b0
  x = add a0 a1
  y = sub a0 a1
  i = const 0
  one = const 1
  br h
block h
  c = cmp_lt i a0
  br_if c body out
block body
  t = add x i
  x = add y i
  y = add t i
  i = add i one
  br h
block out
  r = mul x a1
  r = sub r y
  ret r

proc fact nparams 1 export
block b0
  one = const 1
  c = cmp_lt a0 one
  br_if c base rec
block base
  ret one
block rec
  m = sub a0 one
  f = call fact (m)
  r = mul a0 f
  ret r

proc via_global nparams 1 export
block b0
  f = load_global fn
  r = call_indirect f (a0)
  g = load_global k
  s = add r g
  ret s

proc via_object nparams 2 export
block b0
  o = new_obj 3
  store_field o 0 a0
  store_field o 2 a1
  f = proc_ref square
  store_field o 1 f
  g = load_field o 1
  x = load_field o 0
  y = load_field o 2
  r = call_indirect g (x)
  s = add r y
  ret s

proc counter nparams 1 export
block b0
  s = load_global seen
  s = add s a0
  store_global seen s
  ret s

proc divider nparams 2 export
block b0
  q = div a0 a1
  two = const 2
  h = div q two
  ret h

proc chain nparams 2 export
block b0
  a = call square (a0)
  b = call diamond (a a1)
  c = call redundant (b a0)
  f = load_global fn
  d = call_indirect f (c)
  ret d

proc nested nparams 2 export
block b0
  s = const 0
  i = const 0
  one = const 1
  br oh
block oh
  c = cmp_lt i a0
  br_if c ob od
block ob
  j = const 0
  br ih
block ih
  d = cmp_lt j a1
  br_if d ib id
block ib
  t = mul i j
  s = add s t
  j = add j one
  br ih
block id
  i = add i one
  br oh
block od
  ret s

proc cmp_mix nparams 3 export
block b0
  x = cmp_eq a0 a1
  y = cmp_lt a1 a2
  z = add x y
  w = cmp_eq a0 a1
  r = add z w
  ret r

proc store_cell nparams 1 export
block b0
  two = const 2
  v = mul a0 two
  store_global cell v
  w = load_global cell
  r = add w a0
  ret r
"""

# name -> (arity, low, high) for random integer arguments
INPUTS = {
    "square": (1, -10**9, 10**9),
    "const_expr": (1, -10**6, 10**6),
    "diamond": (2, -1000, 1000),
    "redundant": (2, -10**5, 10**5),
    "sum_to": (1, -5, 60),
    "swap_loop": (2, -3, 30),
    "fact": (1, -2, 20),
    "via_global": (1, -1000, 1000),
    "via_object": (2, -1000, 1000),
    "counter": (1, -50, 50),
    "divider": (2, -20, 20),
    "chain": (2, -100, 100),
    "nested": (2, -2, 12),
    "cmp_mix": (3, -3, 3),
    "store_cell": (1, -1000, 1000),
}
