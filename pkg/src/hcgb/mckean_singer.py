"""Graded Laplacians on simplicial complexes and the heat supertrace.

Finite-dimensional sandbox for the supertrace identity: build a chain
complex from maximal simplices, assemble the Hodge Laplacian out of signed
incidence matrices, and watch Str e^{t Delta} sit on the Euler
characteristic no matter what t (or a deformation parameter) does.  The
mechanism is the usual one: the off-diagonal operator d + d* pairs every
nonzero eigenvalue between even and odd degrees, so only harmonic chains
survive the alternating sum.
"""

import itertools

import numpy as np


class ComplexError(ValueError):
    """Simplex data that cannot form a valid chain complex."""


def _boundaries(simplices):
    # signed incidence matrices; entry (face, simplex) = (-1)^i for the face
    # obtained by dropping the i-th vertex
    out = [np.zeros((0, len(simplices[0])))]
    for k in range(1, len(simplices)):
        index = {s: i for i, s in enumerate(simplices[k - 1])}
        mat = np.zeros((len(simplices[k - 1]), len(simplices[k])))
        for col, s in enumerate(simplices[k]):
            for drop in range(k + 1):
                face = s[:drop] + s[drop + 1:]
                row = index.get(face)
                if row is None:
                    raise ComplexError("missing face %r of %r" % (face, s))
                mat[row, col] = (-1.0) ** drop
        out.append(mat)
    return out


class Complex:
    """Finite simplicial complex with signed boundary matrices.

    simplices[k] lists the k-simplices as sorted vertex tuples in
    lexicographic order; boundaries[k] maps k-chains to (k-1)-chains.
    Construction fails if a face is missing or the composite of two
    boundary maps is not identically zero.
    """

    def __init__(self, simplices):
        self.simplices = []
        for k, level in enumerate(simplices):
            cleaned = sorted(tuple(sorted(s)) for s in level)
            for s in cleaned:
                if len(set(s)) != k + 1:
                    raise ComplexError("repeated vertex in simplex %r" % (s,))
            if len(set(cleaned)) != len(cleaned):
                raise ComplexError("duplicate simplices in degree %d" % k)
            self.simplices.append(cleaned)
        while self.simplices and not self.simplices[-1]:
            self.simplices.pop()
        if not self.simplices or not self.simplices[0]:
            raise ComplexError("complex needs at least one vertex")
        self.boundaries = _boundaries(self.simplices)
        for k in range(2, len(self.simplices)):
            comp = self.boundaries[k - 1] @ self.boundaries[k]
            if comp.size and np.abs(comp).max() != 0.0:
                raise ComplexError("boundary of boundary nonzero at degree %d" % k)

    @property
    def dim(self):
        return len(self.simplices) - 1

    @property
    def counts(self):
        return tuple(len(level) for level in self.simplices)

    @property
    def euler_characteristic(self):
        return int(sum((-1) ** k * n for k, n in enumerate(self.counts)))

    @classmethod
    def from_maximal(cls, maximal):
        """Build the closure of a list of maximal simplices (vertex id lists)."""
        levels = {}
        any_given = False
        for row in maximal:
            verts = tuple(sorted(row))
            if len(set(verts)) != len(verts):
                raise ComplexError("repeated vertex in %r" % (list(row),))
            if not verts:
                continue
            any_given = True
            for size in range(1, len(verts) + 1):
                levels.setdefault(size - 1, set()).update(
                    itertools.combinations(verts, size))
        if not any_given:
            raise ComplexError("no simplices given")
        top = max(levels)
        return cls([sorted(levels.get(k, ())) for k in range(top + 1)])

    @classmethod
    def from_text(cls, text):
        """Parse maximal simplices, one per line, vertex indices separated
        by spaces.  Blank lines and '#' comments are skipped."""
        maximal = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                maximal.append([int(tok) for tok in line.split()])
            except ValueError as exc:
                raise ComplexError("bad simplex line %r" % raw) from exc
        return cls.from_maximal(maximal)


def laplacian_blocks(c):
    """Per-degree blocks of Delta = -(d + d*)^2, each negative semidefinite."""
    blocks = []
    for k in range(c.dim + 1):
        lap = c.boundaries[k].T @ c.boundaries[k]
        if k + 1 <= c.dim:
            up = c.boundaries[k + 1]
            lap = lap + up @ up.T
        blocks.append(-lap)
    return blocks


def dirac_matrix(c):
    """The symmetric block matrix d + d* on the direct sum of all chain
    groups, along with the degree of each basis simplex."""
    counts = c.counts
    offs = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    mat = np.zeros((offs[-1], offs[-1]))
    for k in range(1, c.dim + 1):
        b = c.boundaries[k]
        mat[offs[k - 1]:offs[k], offs[k]:offs[k + 1]] = b
        mat[offs[k]:offs[k + 1], offs[k - 1]:offs[k]] = b.T
    degrees = np.concatenate(
        [np.full(nk, k, dtype=int) for k, nk in enumerate(counts)])
    return mat, degrees


def hodge_laplacian(c):
    """Full graded Laplacian -(d + d*)^2; block diagonal by degree."""
    mat, _ = dirac_matrix(c)
    return -(mat @ mat)


def betti_numbers(c):
    """Rank-nullity Betti numbers b_k = n_k - rank(bd_k) - rank(bd_{k+1})."""
    ranks = [0]
    for k in range(1, c.dim + 1):
        b = c.boundaries[k]
        ranks.append(int(np.linalg.matrix_rank(b)) if b.size else 0)
    ranks.append(0)
    return tuple(len(c.simplices[k]) - ranks[k] - ranks[k + 1]
                 for k in range(c.dim + 1))


def supertrace_heat(c, t):
    """Alternating heat trace sum_k (-1)^k tr e^{t Delta_k}.

    Every nonzero Laplacian eigenvalue shows up once in an even degree and
    once in an odd degree, so the sum collapses to the count of harmonic
    chains: the Euler characteristic, independent of t.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    total = 0.0
    for k, block in enumerate(laplacian_blocks(c)):
        if not block.size:
            continue
        w = np.linalg.eigvalsh(block)
        total += (-1.0) ** k * float(np.exp(t * w).sum())
    return total


def eigenspace_pairing(c, tol=1e-8):
    """Check the even/odd pairing of nonzero Laplacian eigenvalues.

    Diagonalizes each degree block, clusters eigenvalues across degrees at
    relative tolerance tol, and for every nonzero cluster verifies that the
    even and odd multiplicities agree and that d + d* maps the even
    eigenspace onto the odd one with full numerical rank.  The zero cluster
    is reported as kernel dimensions per degree and compared against the
    rank-nullity Betti numbers.
    """
    dirac, _ = dirac_matrix(c)
    counts = c.counts
    offs = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    vals, degs, vecs = [], [], []
    for k, block in enumerate(laplacian_blocks(c)):
        if not block.size:
            continue
        w, v = np.linalg.eigh(block)
        for j in range(len(w)):
            full = np.zeros(offs[-1])
            full[offs[k]:offs[k + 1]] = v[:, j]
            vals.append(float(w[j]))
            degs.append(k)
            vecs.append(full)
    vals = np.asarray(vals)
    degs = np.asarray(degs)
    vecs = np.column_stack(vecs)
    scale = max(1.0, float(np.abs(vals).max()) if vals.size else 1.0)
    order = np.argsort(vals)
    clusters = []
    current = [order[0]]
    for idx in order[1:]:
        if vals[idx] - vals[current[-1]] <= tol * scale:
            current.append(idx)
        else:
            clusters.append(current)
            current = [idx]
    clusters.append(current)

    kernel_dims = [0] * (c.dim + 1)
    pairs = []
    passes = True
    for members in clusters:
        members = np.asarray(members)
        lam = float(vals[members].mean())
        if abs(lam) <= tol * scale:
            for k in degs[members]:
                kernel_dims[int(k)] += 1
            continue
        even = members[degs[members] % 2 == 0]
        odd = members[degs[members] % 2 == 1]
        entry = {"eigenvalue": lam, "even": int(even.size), "odd": int(odd.size)}
        ok = even.size == odd.size
        if ok and even.size:
            mapped = vecs[:, odd].T @ dirac @ vecs[:, even]
            sing = np.linalg.svd(mapped, compute_uv=False)
            ok = bool(sing.min() > tol * sing.max())
        entry["isomorphism"] = bool(ok)
        passes = passes and ok
        pairs.append(entry)

    betti = betti_numbers(c)
    kernel_dims = tuple(kernel_dims)
    passes = passes and kernel_dims == betti
    return {
        "passes": bool(passes),
        "pairs": pairs,
        "kernel_dims": kernel_dims,
        "betti": betti,
        "chi": c.euler_characteristic,
    }


def deformation_supertrace(delta_a, delta_b, degrees,
                           t=0.05, thetas=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """Supertrace of e^{t L} along L = (1 - theta) delta_a - theta delta_b.

    When the two graded operators commute and share their even/odd pairing
    the supertrace cannot move with theta; the returned variation should be
    at rounding level.
    """
    delta_a = np.asarray(delta_a, dtype=float)
    delta_b = np.asarray(delta_b, dtype=float)
    signs = (-1.0) ** np.asarray(degrees)
    values = []
    for theta in thetas:
        op = (1.0 - theta) * delta_a - theta * delta_b
        w, v = np.linalg.eigh(op)
        diag = ((v * np.exp(t * w)) * v).sum(axis=1)
        values.append(float(signs @ diag))
    return {
        "theta": [float(th) for th in thetas],
        "values": values,
        "variation": float(max(values) - min(values)),
    }


def random_flag_complex(n_vertices, edge_prob, seed, max_dim=2):
    """Clique complex of an Erdos-Renyi graph, truncated at max_dim.

    Isolated vertices stay in, so the vertex count is always n_vertices.
    """
    if n_vertices < 1:
        raise ComplexError("need at least one vertex")
    rng = np.random.default_rng(seed)
    adj = np.triu(rng.random((n_vertices, n_vertices)) < edge_prob, 1)
    und = adj | adj.T
    maximal = [[i] for i in range(n_vertices)]
    for size in range(2, max_dim + 2):
        for combo in itertools.combinations(range(n_vertices), size):
            if all(und[a, b] for a, b in itertools.combinations(combo, 2)):
                maximal.append(list(combo))
    return Complex.from_maximal(maximal)
