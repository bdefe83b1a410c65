"""Branch-free closed-form inverses for n <= 4.

The routines are generic over the element type: called with floats they
compute numbers, called with tape symbols they emit straight-line code.
The tree interpreter and the code generator both go through here, so the
two agree to the last bit.
"""


def det_adjugate(a):
    """Return ``(det, adj)`` of the square list-of-lists ``a`` (2 <= n <= 4)."""
    n = len(a)
    if n == 2:
        (a00, a01), (a10, a11) = a
        det = a00 * a11 - a01 * a10
        return det, [[a11, -a01], [-a10, a00]]
    if n == 3:
        (a00, a01, a02), (a10, a11, a12), (a20, a21, a22) = a
        c00 = a11 * a22 - a12 * a21
        c01 = a12 * a20 - a10 * a22
        c02 = a10 * a21 - a11 * a20
        c10 = a02 * a21 - a01 * a22
        c11 = a00 * a22 - a02 * a20
        c12 = a01 * a20 - a00 * a21
        c20 = a01 * a12 - a02 * a11
        c21 = a02 * a10 - a00 * a12
        c22 = a00 * a11 - a01 * a10
        det = a00 * c00 + a01 * c01 + a02 * c02
        return det, [[c00, c10, c20], [c01, c11, c21], [c02, c12, c22]]
    if n == 4:
        (a00, a01, a02, a03), (a10, a11, a12, a13), \
            (a20, a21, a22, a23), (a30, a31, a32, a33) = a
        # 2x2 minors of the top two rows (s) and bottom two rows (c)
        s0 = a00 * a11 - a10 * a01
        s1 = a00 * a12 - a10 * a02
        s2 = a00 * a13 - a10 * a03
        s3 = a01 * a12 - a11 * a02
        s4 = a01 * a13 - a11 * a03
        s5 = a02 * a13 - a12 * a03
        c5 = a22 * a33 - a32 * a23
        c4 = a21 * a33 - a31 * a23
        c3 = a21 * a32 - a31 * a22
        c2 = a20 * a33 - a30 * a23
        c1 = a20 * a32 - a30 * a22
        c0 = a20 * a31 - a30 * a21
        det = s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
        adj = [
            [a11 * c5 - a12 * c4 + a13 * c3, a02 * c4 - a01 * c5 - a03 * c3,
             a31 * s5 - a32 * s4 + a33 * s3, a22 * s4 - a21 * s5 - a23 * s3],
            [a12 * c2 - a10 * c5 - a13 * c1, a00 * c5 - a02 * c2 + a03 * c1,
             a32 * s2 - a30 * s5 - a33 * s1, a20 * s5 - a22 * s2 + a23 * s1],
            [a10 * c4 - a11 * c2 + a13 * c0, a01 * c2 - a00 * c4 - a03 * c0,
             a30 * s4 - a31 * s2 + a33 * s0, a21 * s2 - a20 * s4 - a23 * s0],
            [a11 * c1 - a10 * c3 - a12 * c0, a00 * c3 - a01 * c1 + a02 * c0,
             a31 * s1 - a30 * s3 - a32 * s0, a20 * s3 - a21 * s1 + a22 * s0],
        ]
        return det, adj
    raise ValueError(f"closed-form inverse only for 2 <= n <= 4, got {n}")


def inverse(a, reciprocal):
    """Return ``(inv, det)``; ``reciprocal(x)`` must compute ``1 / x``.

    n == 1 costs a single reciprocal.  Otherwise the adjugate is scaled by one
    reciprocal of the determinant, n*n multiplies.
    """
    if len(a) == 1:
        x = a[0][0]
        return [[reciprocal(x)]], x
    det, adj = det_adjugate(a)
    r = reciprocal(det)
    return [[e * r for e in row] for row in adj], det


def cross(a, b):
    return [a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0]]
