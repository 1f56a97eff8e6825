#include "psg/tape.hpp"

#include "psg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace psg {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

Parameter& ParamStore::add(std::string name, Array init) {
    if (index_.count(name) != 0) {
        throw ConfigError("duplicate parameter name: " + name);
    }
    params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
    index_.emplace(std::move(name), params_.size() - 1);
    return *params_.back();
}

Parameter& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return *params_[it->second];
}

const Parameter& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return *params_[it->second];
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

std::size_t ParamStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p->grad.fill(0.0);
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    for (const auto& p : params_) out.add(p->name, p->value);
    return out;
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (other.size() != size()) {
        throw TrainingError("parameter store size mismatch: " + std::to_string(size()) +
                            " vs " + std::to_string(other.size()));
    }
    for (std::size_t i = 0; i < size(); ++i) {
        Parameter& dst = *params_[i];
        const Parameter& src = other[i];
        if (dst.name != src.name || !dst.value.same_shape(src.value)) {
            throw TrainingError("parameter mismatch at '" + dst.name + "' vs '" + src.name +
                                "' (" + shape_str(dst.value) + " vs " + shape_str(src.value) + ")");
        }
        dst.value = src.value;
    }
}

// ---------------------------------------------------------------------------
// scalar helpers
// ---------------------------------------------------------------------------

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double log_sigmoid(double z) {
    // -softplus(-z), written to avoid overflow for large |z|.
    return std::min(z, 0.0) - std::log1p(std::exp(-std::abs(z)));
}

Array offdiag_mask(std::size_t n, std::size_t p) {
    Array m({n, n, p});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j)
                for (std::size_t k = 0; k < p; ++k) m.at3(i, j, k) = 1.0;
    return m;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Var Tape::emplace(Array value, std::function<void(Tape&, const Node&)> pull) {
    Node n;
    n.grad = Array(value.shape());
    n.value = std::move(value);
    n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::reset() { nodes_.clear(); }

Var Tape::constant(Array value) { return emplace(std::move(value), nullptr); }

Var Tape::param(Parameter& p) {
    Var v = emplace(p.value, nullptr);
    nodes_[v.idx].param = &p;
    return v;
}

void Tape::backward(Var loss) {
    Node& top = nodes_[loss.idx];
    if (!top.value.is_scalar()) {
        throw TrainingError("backward expects a scalar loss, got shape " + shape_str(top.value));
    }
    top.grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.pull) n.pull(*this, n);
        if (n.param != nullptr) {
            auto dst = n.param->grad.data();
            auto src = n.grad.data();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
    }
}

// ---- elementwise -----------------------------------------------------------

Var Tape::add(Var a, Var b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    require_same_shape(av, bv, "add");
    Array out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return emplace(std::move(out), [ai = a.idx, bi = b.idx](Tape& t, const Node& self) {
        Array& da = t.grad_of(ai);
        Array& db = t.grad_of(bi);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            da[i] += self.grad[i];
            db[i] += self.grad[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    require_same_shape(av, bv, "sub");
    Array out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
    return emplace(std::move(out), [ai = a.idx, bi = b.idx](Tape& t, const Node& self) {
        Array& da = t.grad_of(ai);
        Array& db = t.grad_of(bi);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            da[i] += self.grad[i];
            db[i] -= self.grad[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    require_same_shape(av, bv, "mul");
    Array out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return emplace(std::move(out), [ai = a.idx, bi = b.idx](Tape& t, const Node& self) {
        const Array& av2 = t.value_of(ai);
        const Array& bv2 = t.value_of(bi);
        Array& da = t.grad_of(ai);
        Array& db = t.grad_of(bi);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            da[i] += self.grad[i] * bv2[i];
            db[i] += self.grad[i] * av2[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Array out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return emplace(std::move(out), [ai = a.idx, c](Tape& t, const Node& self) {
        Array& da = t.grad_of(ai);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) da[i] += c * self.grad[i];
    });
}

Var Tape::add_rowwise(Var m, Var row) {
    const Array& mv = value(m);
    const Array& rv = value(row);
    if (mv.ndim() != 2 || rv.numel() != mv.dim(1)) {
        throw ShapeError("add_rowwise: shape mismatch " + shape_str(mv) + " vs " + shape_str(rv));
    }
    const std::size_t rows = mv.dim(0), cols = mv.dim(1);
    Array out = mv;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += rv[c];
    return emplace(std::move(out),
                   [mi = m.idx, ri = row.idx, rows, cols](Tape& t, const Node& self) {
                       Array& dm = t.grad_of(mi);
                       Array& dr = t.grad_of(ri);
                       for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < cols; ++c) {
                               dm[r * cols + c] += self.grad[r * cols + c];
                               dr[c] += self.grad[r * cols + c];
                           }
                   });
}

Var Tape::add_scalar(Var m, Var s) {
    const Array& sv = value(s);
    if (!sv.is_scalar()) throw ShapeError("add_scalar: second operand must be scalar");
    Array out = value(m);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += sv[0];
    return emplace(std::move(out), [mi = m.idx, si = s.idx](Tape& t, const Node& self) {
        Array& dm = t.grad_of(mi);
        Array& ds = t.grad_of(si);
        double total = 0.0;
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            dm[i] += self.grad[i];
            total += self.grad[i];
        }
        ds[0] += total;
    });
}

// ---- linear algebra ---------------------------------------------------------

namespace {

// C += A(m x k) * B(k x n); ikj order keeps the inner loop contiguous.
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[i * k + l];
            if (av == 0.0) continue;
            const double* brow = &b[l * n];
            double* crow = &c[i * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A(m x k) * B^T where B is (n x k).
void matmul_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* arow = &a[i * k];
            const double* brow = &b[j * k];
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            c[i * n + j] += acc;
        }
    }
}

// C += A^T * B where A is (k x m), B is (k x n).
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t l = 0; l < k; ++l) {
        const double* arow = &a[l * m];
        const double* brow = &b[l * n];
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = &c[i * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace

Var Tape::matmul(Var a, Var b) {
    const Array& av = value(a);
    const Array& bv = value(b);
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(av) + " vs " + shape_str(bv));
    }
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Array out({m, n});
    matmul_acc(av.data(), bv.data(), out.data(), m, k, n);
    return emplace(std::move(out), [ai = a.idx, bi = b.idx, m, k, n](Tape& t, const Node& self) {
        // dA += dC * B^T, dB += A^T * dC
        matmul_bt_acc(self.grad.data(), t.value_of(bi).data(), t.grad_of(ai).data(), m, n, k);
        matmul_at_acc(t.value_of(ai).data(), self.grad.data(), t.grad_of(bi).data(), k, m, n);
    });
}

Var Tape::transpose(Var a) {
    const Array& av = value(a);
    if (av.ndim() != 2) throw ShapeError("transpose: expected 2-D, got " + shape_str(av));
    const std::size_t r = av.dim(0), c = av.dim(1);
    Array out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    return emplace(std::move(out), [ai = a.idx, r, c](Tape& t, const Node& self) {
        Array& da = t.grad_of(ai);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) da[i * c + j] += self.grad[j * r + i];
    });
}

// ---- nonlinearities ---------------------------------------------------------

Var Tape::softmax(Var x, std::size_t axis) {
    const Array& xv = value(x);
    if (axis >= xv.ndim()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(xv));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= xv.dim(d);
    for (std::size_t d = axis + 1; d < xv.ndim(); ++d) inner *= xv.dim(d);
    const std::size_t len = xv.dim(axis);

    Array out(xv.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const auto at = [&](std::size_t k) { return (o * len + k) * inner + i; };
            double mx = xv[at(0)];
            for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[at(k)]);
            double total = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const double e = std::exp(xv[at(k)] - mx);
                out[at(k)] = e;
                total += e;
            }
            for (std::size_t k = 0; k < len; ++k) out[at(k)] /= total;
        }
    }
    return emplace(std::move(out), [xi = x.idx, outer, inner, len](Tape& t, const Node& self) {
        Array& dx = t.grad_of(xi);
        const Array& s = self.value;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                const auto at = [&](std::size_t k) { return (o * len + k) * inner + i; };
                double dot = 0.0;
                for (std::size_t k = 0; k < len; ++k) dot += self.grad[at(k)] * s[at(k)];
                for (std::size_t k = 0; k < len; ++k)
                    dx[at(k)] += s[at(k)] * (self.grad[at(k)] - dot);
            }
        }
    });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Array& xv = value(x);
    const Array& gv = value(gain);
    const Array& bv = value(bias);
    if (xv.ndim() != 2) throw ShapeError("layer_norm: expected 2-D input, got " + shape_str(xv));
    const std::size_t rows = xv.dim(0), width = xv.dim(1);
    if (gv.numel() != width || bv.numel() != width) {
        throw ShapeError("layer_norm: gain/bias width mismatch for " + shape_str(xv));
    }
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");

    Array out({rows, width});
    Array xhat({rows, width});
    Array inv_sd({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = &xv.data()[r * width];
        double mu = 0.0;
        for (std::size_t c = 0; c < width; ++c) mu += row[c];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t c = 0; c < width; ++c) {
            const double d = row[c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(width);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sd[r] = inv;
        for (std::size_t c = 0; c < width; ++c) {
            const double h = (row[c] - mu) * inv;
            xhat.at2(r, c) = h;
            out.at2(r, c) = h * gv[c] + bv[c];
        }
    }
    return emplace(std::move(out),
                   [xi = x.idx, gi = gain.idx, bi = bias.idx, xhat = std::move(xhat),
                    inv_sd = std::move(inv_sd), rows, width](Tape& t, const Node& self) {
                       Array& dx = t.grad_of(xi);
                       Array& dg = t.grad_of(gi);
                       Array& db = t.grad_of(bi);
                       const Array& g = t.value_of(gi);
                       for (std::size_t r = 0; r < rows; ++r) {
                           double mean_dh = 0.0, mean_dh_xhat = 0.0;
                           for (std::size_t c = 0; c < width; ++c) {
                               const double dy = self.grad.at2(r, c);
                               const double h = xhat.at2(r, c);
                               dg[c] += dy * h;
                               db[c] += dy;
                               const double dh = dy * g[c];
                               mean_dh += dh;
                               mean_dh_xhat += dh * h;
                           }
                           mean_dh /= static_cast<double>(width);
                           mean_dh_xhat /= static_cast<double>(width);
                           for (std::size_t c = 0; c < width; ++c) {
                               const double dh = self.grad.at2(r, c) * g[c];
                               dx.at2(r, c) += inv_sd[r] * (dh - mean_dh -
                                                            xhat.at2(r, c) * mean_dh_xhat);
                           }
                       }
                   });
}

Var Tape::gelu(Var x) {
    static constexpr double inv_sqrt2 = 0.70710678118654752440;
    static constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    const Array& xv = value(x);
    Array out(xv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
    }
    return emplace(std::move(out), [xi = x.idx](Tape& t, const Node& self) {
        const Array& v = t.value_of(xi);
        Array& dx = t.grad_of(xi);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            const double z = v[i];
            const double cdf = 0.5 * (1.0 + std::erf(z * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * z * z);
            dx[i] += self.grad[i] * (cdf + z * pdf);
        }
    });
}

// ---- shape ops ---------------------------------------------------------------

Var Tape::gather_rows(Var table, std::vector<std::size_t> rows) {
    const Array& tv = value(table);
    if (tv.ndim() != 2) throw ShapeError("gather_rows: expected 2-D table, got " + shape_str(tv));
    const std::size_t width = tv.dim(1);
    for (std::size_t r : rows) {
        if (r >= tv.dim(0)) {
            throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                             shape_str(tv));
        }
    }
    Array out({rows.size(), width});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = &tv.data()[rows[i] * width];
        std::copy(src, src + width, &out.data()[i * width]);
    }
    return emplace(std::move(out),
                   [ti = table.idx, rows = std::move(rows), width](Tape& t, const Node& self) {
                       Array& dt = t.grad_of(ti);
                       for (std::size_t i = 0; i < rows.size(); ++i)
                           for (std::size_t c = 0; c < width; ++c)
                               dt[rows[i] * width + c] += self.grad[i * width + c];
                   });
}

Var Tape::vstack(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("vstack: no inputs");
    const std::size_t cols = value(parts[0]).dim(1);
    std::size_t rows = 0;
    for (Var p : parts) {
        const Array& pv = value(p);
        if (pv.ndim() != 2 || pv.dim(1) != cols) {
            throw ShapeError("vstack: column mismatch, " + shape_str(pv));
        }
        rows += pv.dim(0);
    }
    Array out({rows, cols});
    std::vector<std::uint32_t> idx;
    std::vector<std::size_t> offsets;
    std::size_t at = 0;
    for (Var p : parts) {
        const Array& pv = value(p);
        std::copy(pv.data().begin(), pv.data().end(), out.data().begin() + at);
        idx.push_back(p.idx);
        offsets.push_back(at);
        at += pv.numel();
    }
    return emplace(std::move(out), [idx = std::move(idx), offsets = std::move(offsets)](
                                       Tape& t, const Node& self) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
            Array& dp = t.grad_of(idx[k]);
            for (std::size_t i = 0; i < dp.numel(); ++i) dp[i] += self.grad[offsets[k] + i];
        }
    });
}

Var Tape::hstack(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("hstack: no inputs");
    const std::size_t rows = value(parts[0]).dim(0);
    std::size_t cols = 0;
    for (Var p : parts) {
        const Array& pv = value(p);
        if (pv.ndim() != 2 || pv.dim(0) != rows) {
            throw ShapeError("hstack: row mismatch, " + shape_str(pv));
        }
        cols += pv.dim(1);
    }
    Array out({rows, cols});
    std::vector<std::uint32_t> idx;
    std::vector<std::size_t> col_off, widths;
    std::size_t at = 0;
    for (Var p : parts) {
        const Array& pv = value(p);
        const std::size_t w = pv.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(&pv.data()[r * w], &pv.data()[r * w] + w, &out.data()[r * cols + at]);
        idx.push_back(p.idx);
        col_off.push_back(at);
        widths.push_back(w);
        at += w;
    }
    return emplace(std::move(out),
                   [idx = std::move(idx), col_off = std::move(col_off),
                    widths = std::move(widths), rows, cols](Tape& t, const Node& self) {
                       for (std::size_t k = 0; k < idx.size(); ++k) {
                           Array& dp = t.grad_of(idx[k]);
                           const std::size_t w = widths[k];
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < w; ++c)
                                   dp[r * w + c] += self.grad[r * cols + col_off[k] + c];
                       }
                   });
}

Var Tape::slice_rows(Var x, std::size_t start, std::size_t count) {
    const Array& xv = value(x);
    if (xv.ndim() != 2 || start + count > xv.dim(0)) {
        throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of bounds for " + shape_str(xv));
    }
    const std::size_t cols = xv.dim(1);
    Array out({count, cols});
    std::copy(&xv.data()[start * cols], &xv.data()[(start + count) * cols], out.data().begin());
    return emplace(std::move(out), [xi = x.idx, start, cols](Tape& t, const Node& self) {
        Array& dx = t.grad_of(xi);
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
            dx[start * cols + i] += self.grad[i];
    });
}

Var Tape::slice_cols(Var x, std::size_t start, std::size_t count) {
    const Array& xv = value(x);
    if (xv.ndim() != 2 || start + count > xv.dim(1)) {
        throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of bounds for " + shape_str(xv));
    }
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    Array out({rows, count});
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(&xv.data()[r * cols + start], &xv.data()[r * cols + start + count],
                  &out.data()[r * count]);
    return emplace(std::move(out),
                   [xi = x.idx, start, count, cols](Tape& t, const Node& self) {
                       Array& dx = t.grad_of(xi);
                       const std::size_t rows2 = self.grad.dim(0);
                       for (std::size_t r = 0; r < rows2; ++r)
                           for (std::size_t c = 0; c < count; ++c)
                               dx[r * cols + start + c] += self.grad[r * count + c];
                   });
}

Var Tape::mean_rows(Var x) {
    const Array& xv = value(x);
    if (xv.ndim() != 2) throw ShapeError("mean_rows: expected 2-D, got " + shape_str(xv));
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    Array out({1, cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += xv[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) out[c] /= static_cast<double>(rows);
    return emplace(std::move(out), [xi = x.idx, rows, cols](Tape& t, const Node& self) {
        Array& dx = t.grad_of(xi);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                dx[r * cols + c] += self.grad[c] / static_cast<double>(rows);
    });
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
    const Array& xv = value(x);
    if (shape_numel(shape) != xv.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(xv) + " as " + shape_str(shape));
    }
    Array out(std::move(shape), std::vector<double>(xv.data().begin(), xv.data().end()));
    return emplace(std::move(out), [xi = x.idx](Tape& t, const Node& self) {
        Array& dx = t.grad_of(xi);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) dx[i] += self.grad[i];
    });
}

Var Tape::sum(Var x) {
    const Array& xv = value(x);
    double total = 0.0;
    for (double v : xv.data()) total += v;
    return emplace(Array::scalar(total), [xi = x.idx](Tape& t, const Node& self) {
        Array& dx = t.grad_of(xi);
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += self.grad[0];
    });
}

Var Tape::mean(Var x) {
    const std::size_t n = value(x).numel();
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

// ---- classification loss -----------------------------------------------------

namespace {

struct EntryLoss {
    double loss;
    double dz;
};

// Soft-target binary cross-entropy in its log-sum-exp stable form.
EntryLoss bce_entry(double z, double t) {
    const double loss = -(t * log_sigmoid(z) + (1.0 - t) * log_sigmoid(-z));
    return {loss, sigmoid(z) - t};
}

// Soft targets interpolate the positive and negative focal branches; the
// positive branch carries the `balance` weight, the negative branch weight 1
// (so gamma=0, balance=1 reduces exactly to bce_entry).
EntryLoss focal_entry(double z, double t, double gamma, double balance) {
    const double p = sigmoid(z);
    const double q = sigmoid(-z); // 1 - p, computed stably
    const double log_p = log_sigmoid(z);
    const double log_q = log_sigmoid(-z);
    const double pow_q = std::pow(q, gamma);
    const double pow_p = std::pow(p, gamma);

    const double branch_pos = -pow_q * log_p;
    const double branch_neg = -pow_p * log_q;
    const double loss = t * balance * branch_pos + (1.0 - t) * branch_neg;

    const double dpos = gamma * pow_q * p * log_p - pow_q * q;
    const double dneg = -gamma * pow_p * q * log_q + pow_p * p;
    const double dz = t * balance * dpos + (1.0 - t) * dneg;
    return {loss, dz};
}

} // namespace

Var Tape::pair_loss(std::span<const Var> planes, const Array& targets, const Array& include,
                    double gamma, double balance, bool focal) {
    const std::size_t p_count = planes.size();
    if (p_count == 0) throw ShapeError("pair_loss: no predicate planes");
    const std::size_t n = value(planes[0]).dim(0);
    for (Var pl : planes) {
        const Array& v = value(pl);
        if (v.ndim() != 2 || v.dim(0) != n || v.dim(1) != n) {
            throw ShapeError("pair_loss: plane shape " + shape_str(v) + ", expected " +
                             std::to_string(n) + "x" + std::to_string(n));
        }
    }
    const std::vector<std::size_t> want{n, n, p_count};
    if (targets.shape() != want || include.shape() != want) {
        throw ShapeError("pair_loss: targets/include must be " + shape_str(want));
    }

    double weight_total = 0.0;
    for (double w : include.data()) weight_total += (w != 0.0) ? 1.0 : 0.0;

    double loss_total = 0.0;
    Array dz({n, n, p_count});
    for (std::size_t p = 0; p < p_count; ++p) {
        const Array& plane = value(planes[p]);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (include.at3(i, j, p) == 0.0) continue;
                const double z = plane.at2(i, j);
                if (!std::isfinite(z)) {
                    throw TrainingError("pair_loss: non-finite logit at (" + std::to_string(i) +
                                        "," + std::to_string(j) + "," + std::to_string(p) + ")");
                }
                const double t = targets.at3(i, j, p);
                const EntryLoss e = focal ? focal_entry(z, t, gamma, balance) : bce_entry(z, t);
                loss_total += e.loss;
                dz.at3(i, j, p) = e.dz;
            }
        }
    }
    if (weight_total == 0.0) {
        return constant(Array::scalar(0.0));
    }
    const double inv = 1.0 / weight_total;

    std::vector<std::uint32_t> idx;
    idx.reserve(p_count);
    for (Var pl : planes) idx.push_back(pl.idx);
    return emplace(Array::scalar(loss_total * inv),
                   [idx = std::move(idx), dz = std::move(dz), inv, n](Tape& t, const Node& self) {
                       const double g = self.grad[0] * inv;
                       for (std::size_t p = 0; p < idx.size(); ++p) {
                           Array& dp = t.grad_of(idx[p]);
                           for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < n; ++j)
                                   dp.at2(i, j) += g * dz.at3(i, j, p);
                       }
                   });
}

} // namespace psg
