"""
Textbook CR-P0 Stokes assembly written independently of the package.

Used as the second route for equal viscosities: element loops with
barycentric CR functions, Simpson and Gauss rules on edges, SciPy's default sparse
solver.  It shares only the global unknown ordering (x-velocity per edge,
y-velocity per edge, pressure per element, one multiplier), so solution
vectors can be compared entry by entry.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def _edge_table(vertices, triangles):
    """Edges keyed by sorted vertex pair; local edge k of a triangle is opposite vertex k."""
    index = {}
    owners = []
    tri_edges = np.empty((len(triangles), 3), dtype=int)
    for t, tri in enumerate(triangles):
        for k in range(3):
            key = tuple(sorted((tri[(k + 1) % 3], tri[(k + 2) % 3])))
            if key not in index:
                index[key] = len(index)
                owners.append([])
            tri_edges[t, k] = index[key]
            owners[index[key]].append(t)
    return index, owners, tri_edges


def _cr_functions(p):
    """Coefficients (c, gx, gy) of the three CR functions: 1 at the midpoint of edge k, 0 at the others."""
    mids = np.array([(p[(k + 1) % 3] + p[(k + 2) % 3]) / 2.0 for k in range(3)])
    V = np.column_stack((np.ones(3), mids))
    return np.linalg.solve(V, np.eye(3))  # column k: coefficients of function k


def _simpson(a, b):
    return [a, (a + b) / 2.0, b], np.array([1.0, 4.0, 1.0]) / 6.0 * np.linalg.norm(b - a)


class ReferenceStokes:
    """Sparse CR-P0 system with an edge jump penalty and an optional pressure-jump term.

    ``penalty`` multiplies the 1/|e| jump penalty; ``jump_edges`` lists edges
    (as sorted vertex pairs) that carry ``|e| int_e [p][q]``.
    """

    def __init__(self, vertices, triangles, mu, f, g, penalty=1.0, jump_edges=()):
        self.vertices = np.asarray(vertices, float)
        self.triangles = np.asarray(triangles, int)
        self.mu = float(mu)
        index, owners, tri_edges = _edge_table(self.vertices, self.triangles)
        self.edge_index = index
        self.owners = owners
        self.tri_edges = tri_edges
        ne, nt = len(index), len(self.triangles)
        self.ne, self.nt = ne, nt
        self.size = 2 * ne + nt + 1
        rows, cols, vals = [], [], []
        rhs = np.zeros(self.size)

        def add(i, j, v):
            rows.append(i)
            cols.append(j)
            vals.append(v)

        self.coef = []
        for t, tri in enumerate(self.triangles):
            p = self.vertices[tri]
            area = 0.5 * abs(np.linalg.det(np.array([p[1] - p[0], p[2] - p[0]])))
            C = _cr_functions(p)
            self.coef.append(C)
            grads = C[1:].T  # (3, 2)
            dofs_x = tri_edges[t]
            dofs_y = tri_edges[t] + ne
            pdof = 2 * ne + t
            # 2 mu eps(u):eps(v) for u = phi_j e_a, v = phi_i e_b
            for i in range(3):
                for j in range(3):
                    gi, gj = grads[i], grads[j]
                    for a, da in ((0, dofs_x), (1, dofs_y)):
                        for b, db in ((0, dofs_x), (1, dofs_y)):
                            Ei = np.zeros((2, 2))
                            Ei[b] += gi
                            Ei = 0.5 * (Ei + Ei.T)
                            Ej = np.zeros((2, 2))
                            Ej[a] += gj
                            Ej = 0.5 * (Ej + Ej.T)
                            add(db[i], da[j], 2.0 * self.mu * area * np.sum(Ei * Ej))
            # -int q div v and its negative transpose
            for i in range(3):
                for b, db in ((0, dofs_x), (1, dofs_y)):
                    bval = -area * grads[i][b]
                    add(db[i], pdof, bval)
                    add(pdof, db[i], -bval)
            # load: Gauss 3-point (edge midpoints) is exact for quadratics
            mids = np.array([(p[(k + 1) % 3] + p[(k + 2) % 3]) / 2.0 for k in range(3)])
            fv = np.asarray(f(mids), float)
            for i in range(3):
                phi = C[0, i] + mids @ C[1:, i]
                rhs[dofs_x[i]] += area / 3.0 * fv[:, 0] @ phi
                rhs[dofs_y[i]] += area / 3.0 * fv[:, 1] @ phi

        # edge jump penalty, boundary edges penalize u - g
        self.boundary = []
        for (v0, v1), e in index.items():
            tris = owners[e]
            a, b = self.vertices[v0], self.vertices[v1]
            length = np.linalg.norm(b - a)
            pts, w = _simpson(a, b)
            pts = np.array(pts)
            sides = []
            for s, t in enumerate(tris):
                C = self.coef[t]
                loc = list(self.tri_edges[t])
                vals_t = C[0][None, :] + pts @ C[1:]  # (3 points, 3 functions)
                sides.append((1.0 if s == 0 else -1.0, t, loc, vals_t))
            weight = penalty * self.mu / length
            for si, ti, loci, vi in sides:
                for sj, tj, locj, vj in sides:
                    for i in range(3):
                        for j in range(3):
                            m = weight * si * sj * np.sum(w * vi[:, i] * vj[:, j])
                            add(loci[i], locj[j], m)
                            add(loci[i] + ne, locj[j] + ne, m)
            if len(tris) == 1:
                # g is cubic for the test solution: 3-point Gauss, exact to degree 5
                self.boundary.append(e)
                t = tris[0]
                C = self.coef[t]
                loc = list(self.tri_edges[t])
                gx, gw = np.polynomial.legendre.leggauss(3)
                gpts = a + (0.5 * (gx + 1.0))[:, None] * (b - a)
                gwts = 0.5 * gw * length
                gv = np.asarray(g(gpts), float)
                vt = C[0][None, :] + gpts @ C[1:]
                for i in range(3):
                    rhs[loc[i]] += weight * np.sum(gwts * gv[:, 0] * vt[:, i])
                    rhs[loc[i] + ne] += weight * np.sum(gwts * gv[:, 1] * vt[:, i])

        for key in jump_edges:
            e = index[tuple(sorted(key))]
            t1, t2 = owners[e]
            length = np.linalg.norm(self.vertices[key[0]] - self.vertices[key[1]])
            for ti, si in ((t1, 1.0), (t2, -1.0)):
                for tj, sj in ((t1, 1.0), (t2, -1.0)):
                    add(2 * ne + ti, 2 * ne + tj, length * length * si * sj)

        mult = self.size - 1
        for t, tri in enumerate(self.triangles):
            p = self.vertices[tri]
            area = 0.5 * abs(np.linalg.det(np.array([p[1] - p[0], p[2] - p[0]])))
            add(2 * ne + t, mult, area)
            add(mult, 2 * ne + t, area)

        full = sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))
        # Dirichlet values: exact edge means by 5-point Gauss
        gx, gw = np.polynomial.legendre.leggauss(5)
        dof_vals = {}
        for e in self.boundary:
            v0, v1 = [k for k, idx in index.items() if idx == e][0]
            a, b = self.vertices[v0], self.vertices[v1]
            pts = a + (0.5 * (gx + 1.0))[:, None] * (b - a)
            mean = 0.5 * gw @ np.asarray(g(pts), float)
            dof_vals[e] = mean[0]
            dof_vals[e + ne] = mean[1]
        ddofs = np.array(sorted(dof_vals))
        dvals = np.array([dof_vals[d] for d in ddofs])
        xg = np.zeros(self.size)
        xg[ddofs] = dvals
        rhs = rhs - full @ xg
        rhs[ddofs] = dvals
        mask = np.ones(self.size)
        mask[ddofs] = 0.0
        D = sp.diags(mask)
        self.full = full
        self.matrix = (D @ full @ D + sp.diags(1.0 - mask)).tocsc()
        self.rhs = rhs

    def solve(self):
        return spla.spsolve(self.matrix, self.rhs)

    def errors(self, x, u, grad_u, p):
        """(L2 velocity, broken H1 velocity, L2 pressure) errors with a degree-5 Gauss rule."""
        # Strang-Fix 7-point rule on the reference triangle
        a, b = 0.0597158717, 0.4701420641
        c, d = 0.7974269853, 0.1012865073
        bary = np.array(
            [[1 / 3, 1 / 3, 1 / 3], [a, b, b], [b, a, b], [b, b, a], [c, d, d], [d, c, d], [d, d, c]]
        )
        wts = np.array([0.225] + [0.1323941527] * 3 + [0.1259391805] * 3)
        e = np.zeros(3)
        ne = self.ne
        for t, tri in enumerate(self.triangles):
            p_ = self.vertices[tri]
            area = 0.5 * abs(np.linalg.det(np.array([p_[1] - p_[0], p_[2] - p_[0]])))
            C = self.coef[t]
            pts = bary @ p_
            phi = C[0][None, :] + pts @ C[1:]
            loc = self.tri_edges[t]
            uh = np.column_stack((phi @ x[loc], phi @ x[loc + ne]))
            guh = np.array([C[1:] @ x[loc], C[1:] @ x[loc + ne]])  # [a, b] = d u_a / d x_b
            du = np.asarray(u(pts)) - uh
            dg = np.asarray(grad_u(pts)) - guh[None]
            dp = np.asarray(p(pts)) - x[2 * ne + t]
            e += area * np.array(
                [wts @ np.sum(du * du, axis=1), wts @ np.sum(dg * dg, axis=(1, 2)), wts @ (dp * dp)]
            )
        return np.sqrt(e)


def circle_jump_edges(vertices, triangles, r0):
    """Interior edges whose endpoints lie strictly on opposite sides of the circle |x| = r0."""
    vertices = np.asarray(vertices, float)
    phi = np.sum(vertices**2, axis=1) - r0 * r0
    index, owners, _ = _edge_table(vertices, np.asarray(triangles, int))
    out = []
    tol = 1e-12
    for (v0, v1), e in index.items():
        if len(owners[e]) == 2 and phi[v0] * phi[v1] < 0.0 and min(abs(phi[v0]), abs(phi[v1])) > tol:
            out.append((v0, v1))
    return out
