"""Independent reference computations for frozen test vectors.

Pure-Python ristretto255 (RFC 9496) plus the hashing conventions used by the Rust code. Slow but
simple; run `python3 tools/oracle.py` to print the vectors the Rust tests pin.
"""
import hashlib
import hmac
import struct

P = 2**255 - 19
L = 2**252 + 27742317777372353535851937790883648493
D = (-121665 * pow(121666, P - 2, P)) % P
SQRT_M1 = pow(2, (P - 1) // 4, P)


def inv(x):
    return pow(x, P - 2, P)


def is_neg(x):
    return x % P & 1


def ct_abs(x):
    return (-x) % P if is_neg(x) else x % P


def sqrt_ratio_m1(u, v):
    r = (u * pow(v, 3, P) * pow(u * pow(v, 7, P), (P - 5) // 8, P)) % P
    check = (v * r * r) % P
    correct = check == u % P
    flipped = check == (-u) % P
    flipped_i = check == (-u * SQRT_M1) % P
    if flipped or flipped_i:
        r = (r * SQRT_M1) % P
    return correct or flipped, ct_abs(r)


INVSQRT_A_MINUS_D = sqrt_ratio_m1(1, (-1 - D) % P)[1]

# Edwards base point in extended coordinates.
BY = (4 * inv(5)) % P
BX2 = ((BY * BY - 1) * inv(D * BY * BY + 1)) % P
BX = pow(BX2, (P + 3) // 8, P)
if (BX * BX - BX2) % P != 0:
    BX = (BX * SQRT_M1) % P
if BX & 1:
    BX = P - BX
BASE = (BX, BY, 1, (BX * BY) % P)
IDENT = (0, 1, 1, 0)


def add(p, q):
    x1, y1, z1, t1 = p
    x2, y2, z2, t2 = q
    a = (y1 - x1) * (y2 - x2) % P
    b = (y1 + x1) * (y2 + x2) % P
    c = 2 * D * t1 * t2 % P
    d = 2 * z1 * z2 % P
    e, f, g, h = b - a, d - c, d + c, b + a
    return (e * f % P, g * h % P, f * g % P, e * h % P)


def mul(k, p):
    r = IDENT
    while k:
        if k & 1:
            r = add(r, p)
        p = add(p, p)
        k >>= 1
    return r


def encode(p):
    x0, y0, z0, t0 = p
    u1 = (z0 + y0) * (z0 - y0) % P
    u2 = x0 * y0 % P
    _, invsqrt = sqrt_ratio_m1(1, u1 * u2 * u2 % P)
    den1 = invsqrt * u1 % P
    den2 = invsqrt * u2 % P
    z_inv = den1 * den2 * t0 % P
    ix0 = x0 * SQRT_M1 % P
    iy0 = y0 * SQRT_M1 % P
    enchanted = den1 * INVSQRT_A_MINUS_D % P
    if is_neg(t0 * z_inv):
        x, y, den_inv = iy0, ix0, enchanted
    else:
        x, y, den_inv = x0, y0, den2
    if is_neg(x * z_inv):
        y = (-y) % P
    s = ct_abs(den_inv * (z0 - y))
    return s.to_bytes(32, "little")


def lp(parts):
    out = b""
    for p in parts:
        out += struct.pack(">Q", len(p)) + p
    return out


def h2s(label, parts):
    return int.from_bytes(hashlib.sha512(lp([label.encode()] + parts)).digest(), "little") % L


def h32(label, parts):
    return hashlib.sha256(lp([label.encode()] + parts)).digest()


def sig_keygen(seed):
    counter = 0
    while True:
        sk = h2s("kf/sig/keygen", [seed, counter.to_bytes(4, "big")])
        if sk:
            return sk, encode(mul(sk, BASE))
        counter += 1


def tk_params(seed, n):
    cur = h32("kf/tk/anchor", [seed])
    seeds = [None] * n
    for s in reversed(range(n)):
        seeds[s] = cur
        cur = h32("kf/tk/chain", [cur])
    keys = [encode(mul(h2s("kf/tk/epoch-key", [sd]), BASE)) for sd in seeds]
    level = [h32("kf/tk/leaf", [s.to_bytes(8, "big"), k]) for s, k in enumerate(keys)]
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            pair = level[i:i + 2]
            nxt.append(h32("kf/tk/node", pair) if len(pair) == 2 else pair[0])
        level = nxt
    return keys, level[0]


if __name__ == "__main__":
    sk, pk = sig_keygen(bytes(32))
    print("sig sk(zero seed)      ", "%064x" % sk)
    print("sig pk(zero seed)      ", pk.hex())
    print("prf(zero, tag:2019/...)", hmac.new(bytes(32), b"tag:2019/01/01/0", hashlib.sha256).hexdigest())
    keys, root = tk_params(bytes(32), 4)
    print("tk K_0(zero seed, n=4) ", keys[0].hex())
    print("tk root(zero seed, n=4)", root.hex())
