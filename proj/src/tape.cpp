#include "sdtm/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace sdtm {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                         b.shape_str() + " differ");
    }
}

}  // namespace

void Tape::check(Value v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw Error("value handle does not belong to this tape");
    }
}

int Tape::push(Tensor data, bool needs_grad, std::function<void(Tape&, int)> back) {
    Node n;
    n.data = std::move(data);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_accum(int id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor::zeros(n.data.shape);
        n.has_grad = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(Value v) const {
    check(v);
    const Node& n = nodes_[v.id];
    if (!n.has_grad) throw Error("no gradient recorded for this value");
    return n.grad;
}

Value Tape::leaf(Tensor data, Tensor* sink) {
    if (sink) check_same_shape(data, *sink, "leaf sink");
    int id = push(std::move(data), true, nullptr);
    nodes_[id].sink = sink;
    return {id};
}

Value Tape::leaf(Tensor data) { return {push(std::move(data), true, nullptr)}; }

Value Tape::constant(Tensor data) { return {push(std::move(data), false, nullptr)}; }

Value Tape::add(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = data(a);
    const Tensor& tb = data(b);
    check_same_shape(ta, tb, "add");
    Tensor out = ta;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += tb.v[i];
    bool ng = needs(a) || needs(b);
    int id = push(std::move(out), ng, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.needs(a)) {
            Tensor& ga = t.grad_accum(a.id);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
        }
        if (t.needs(b)) {
            Tensor& gb = t.grad_accum(b.id);
            for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i];
        }
    });
    return {id};
}

Value Tape::sub(Value a, Value b) { return add(a, scale_const(b, -1.0)); }

Value Tape::add_rowvec(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = data(a);
    const Tensor& tb = data(b);
    if (tb.rows() != 1 || tb.cols() != ta.cols()) {
        throw ShapeError("add_rowvec: " + ta.shape_str() + " + " + tb.shape_str());
    }
    Tensor out = ta;
    size_t r = ta.rows(), c = ta.cols();
    for (size_t i = 0; i < r; ++i) {
        double* o = out.v.data() + i * c;
        for (size_t j = 0; j < c; ++j) o[j] += tb.v[j];
    }
    bool ng = needs(a) || needs(b);
    int id = push(std::move(out), ng, [a, b, r, c](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.needs(a)) {
            Tensor& ga = t.grad_accum(a.id);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
        }
        if (t.needs(b)) {
            Tensor& gb = t.grad_accum(b.id);
            for (size_t i = 0; i < r; ++i) {
                const double* gr = g.v.data() + i * c;
                for (size_t j = 0; j < c; ++j) gb.v[j] += gr[j];
            }
        }
    });
    return {id};
}

Value Tape::mul(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = data(a);
    const Tensor& tb = data(b);
    check_same_shape(ta, tb, "mul");
    Tensor out = ta;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= tb.v[i];
    bool ng = needs(a) || needs(b);
    int id = push(std::move(out), ng, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& ta2 = t.data(a);
        const Tensor& tb2 = t.data(b);
        if (t.needs(a)) {
            Tensor& ga = t.grad_accum(a.id);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * tb2.v[i];
        }
        if (t.needs(b)) {
            Tensor& gb = t.grad_accum(b.id);
            for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i] * ta2.v[i];
        }
    });
    return {id};
}

Value Tape::scale_const(Value a, double c) {
    check(a);
    Tensor out = data(a);
    for (double& x : out.v) x *= c;
    int id = push(std::move(out), needs(a), [a, c](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += c * g.v[i];
    });
    return {id};
}

Value Tape::scale(Value a, Value s) {
    check(a);
    check(s);
    const Tensor& ts = data(s);
    if (ts.numel() != 1) {
        throw ShapeError("scale: scalar operand has shape " + ts.shape_str());
    }
    double sv = ts.v[0];
    Tensor out = data(a);
    for (double& x : out.v) x *= sv;
    bool ng = needs(a) || needs(s);
    int id = push(std::move(out), ng, [a, s, sv](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.needs(a)) {
            Tensor& ga = t.grad_accum(a.id);
            for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += sv * g.v[i];
        }
        if (t.needs(s)) {
            const Tensor& ta2 = t.data(a);
            double acc = 0.0;
            for (size_t i = 0; i < g.v.size(); ++i) acc += g.v[i] * ta2.v[i];
            t.grad_accum(s.id).v[0] += acc;
        }
    });
    return {id};
}

Value Tape::matmul(Value a, Value b, bool trans_a, bool trans_b) {
    check(a);
    check(b);
    const Tensor& ta = data(a);
    const Tensor& tb = data(b);
    size_t m = trans_a ? ta.cols() : ta.rows();
    size_t k = trans_a ? ta.rows() : ta.cols();
    size_t kb = trans_b ? tb.cols() : tb.rows();
    size_t n = trans_b ? tb.rows() : tb.cols();
    if (k != kb) {
        throw ShapeError("matmul: inner dims of " + ta.shape_str() + " and " +
                         tb.shape_str() + " differ");
    }
    Tensor out({m, n});
    // A(i,p) row-major; transposition handled via strides.
    size_t ars = trans_a ? 1 : ta.cols();
    size_t acs = trans_a ? ta.cols() : 1;
    size_t brs = trans_b ? 1 : tb.cols();
    size_t bcs = trans_b ? tb.cols() : 1;
    for (size_t i = 0; i < m; ++i) {
        double* orow = out.v.data() + i * n;
        for (size_t p = 0; p < k; ++p) {
            double av = ta.v[i * ars + p * acs];
            if (av == 0.0) continue;
            const double* bbase = tb.v.data();
            for (size_t j = 0; j < n; ++j) {
                orow[j] += av * bbase[p * brs + j * bcs];
            }
        }
    }
    bool ng = needs(a) || needs(b);
    int id = push(std::move(out), ng,
                  [a, b, trans_a, trans_b, m, n, k, ars, acs, brs, bcs](Tape& t, int self) {
                      const Tensor& g = t.nodes_[self].grad;
                      const Tensor& ta2 = t.data(a);
                      const Tensor& tb2 = t.data(b);
                      if (t.needs(a)) {
                          Tensor& ga = t.grad_accum(a.id);
                          // dA(i,p) += sum_j g(i,j) * B(p,j)
                          for (size_t i = 0; i < m; ++i) {
                              const double* grow = g.v.data() + i * n;
                              for (size_t p = 0; p < k; ++p) {
                                  double acc = 0.0;
                                  for (size_t j = 0; j < n; ++j) {
                                      acc += grow[j] * tb2.v[p * brs + j * bcs];
                                  }
                                  ga.v[i * ars + p * acs] += acc;
                              }
                          }
                      }
                      if (t.needs(b)) {
                          Tensor& gb = t.grad_accum(b.id);
                          // dB(p,j) += sum_i A(i,p) * g(i,j)
                          for (size_t i = 0; i < m; ++i) {
                              const double* grow = g.v.data() + i * n;
                              for (size_t p = 0; p < k; ++p) {
                                  double av = ta2.v[i * ars + p * acs];
                                  if (av == 0.0) continue;
                                  for (size_t j = 0; j < n; ++j) {
                                      gb.v[p * brs + j * bcs] += av * grow[j];
                                  }
                              }
                          }
                      }
                      (void)trans_a;
                      (void)trans_b;
                  });
    return {id};
}

Value Tape::transpose(Value a) {
    check(a);
    const Tensor& ta = data(a);
    size_t r = ta.rows(), c = ta.cols();
    Tensor out({c, r});
    for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < c; ++j) out.v[j * r + i] = ta.v[i * c + j];
    }
    int id = push(std::move(out), needs(a), [a, r, c](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < r; ++i) {
            for (size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[j * r + i];
        }
    });
    return {id};
}

Value Tape::reshape(Value a, std::vector<size_t> shape) {
    check(a);
    const Tensor& ta = data(a);
    if (Tensor::numel_of(shape) != ta.numel()) {
        throw ShapeError("reshape: cannot view " + ta.shape_str() + " as new shape");
    }
    Tensor out(std::move(shape), ta.v);
    int id = push(std::move(out), needs(a), [a](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    });
    return {id};
}

Value Tape::softmax_rows(Value a) {
    check(a);
    const Tensor& ta = data(a);
    size_t r = ta.rows(), c = ta.cols();
    Tensor out = ta;
    for (size_t i = 0; i < r; ++i) {
        double* row = out.v.data() + i * c;
        double mx = row[0];
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        double inv = 1.0 / sum;
        for (size_t j = 0; j < c; ++j) row[j] *= inv;
    }
    int id = push(std::move(out), needs(a), [a, r, c](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& s = t.nodes_[self].data;
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < r; ++i) {
            const double* gr = g.v.data() + i * c;
            const double* sr = s.v.data() + i * c;
            double dot = 0.0;
            for (size_t j = 0; j < c; ++j) dot += gr[j] * sr[j];
            double* gar = ga.v.data() + i * c;
            for (size_t j = 0; j < c; ++j) gar[j] += sr[j] * (gr[j] - dot);
        }
    });
    return {id};
}

Value Tape::layer_norm_rows(Value a, Value gain, Value bias, double eps) {
    check(a);
    check(gain);
    check(bias);
    const Tensor& ta = data(a);
    size_t r = ta.rows(), c = ta.cols();
    const Tensor& tg = data(gain);
    const Tensor& tb = data(bias);
    if (tg.numel() != c || tb.numel() != c) {
        throw ShapeError("layer_norm: gain/bias must have " + std::to_string(c) +
                         " elements");
    }
    Tensor out({r, c});
    auto stats = std::make_shared<std::vector<double>>(2 * r);  // mean, inv_std
    for (size_t i = 0; i < r; ++i) {
        const double* x = ta.v.data() + i * c;
        double mean = 0.0;
        for (size_t j = 0; j < c; ++j) mean += x[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (size_t j = 0; j < c; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<double>(c);
        double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)[2 * i] = mean;
        (*stats)[2 * i + 1] = inv_std;
        double* o = out.v.data() + i * c;
        for (size_t j = 0; j < c; ++j) {
            o[j] = tg.v[j] * (x[j] - mean) * inv_std + tb.v[j];
        }
    }
    bool ng = needs(a) || needs(gain) || needs(bias);
    int id = push(std::move(out), ng, [a, gain, bias, r, c, stats](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& ta2 = t.data(a);
        const Tensor& tg2 = t.data(gain);
        for (size_t i = 0; i < r; ++i) {
            const double* gr = g.v.data() + i * c;
            const double* x = ta2.v.data() + i * c;
            double mean = (*stats)[2 * i];
            double inv_std = (*stats)[2 * i + 1];
            if (t.needs(gain)) {
                Tensor& gg = t.grad_accum(gain.id);
                for (size_t j = 0; j < c; ++j) {
                    gg.v[j] += gr[j] * (x[j] - mean) * inv_std;
                }
            }
            if (t.needs(bias)) {
                Tensor& gb = t.grad_accum(bias.id);
                for (size_t j = 0; j < c; ++j) gb.v[j] += gr[j];
            }
            if (t.needs(a)) {
                Tensor& ga = t.grad_accum(a.id);
                // d/dx of gain*(x-mean)*inv_std: project out mean and
                // variance directions.
                double sum_gy = 0.0, sum_gyx = 0.0;
                for (size_t j = 0; j < c; ++j) {
                    double gy = gr[j] * tg2.v[j];
                    sum_gy += gy;
                    sum_gyx += gy * (x[j] - mean) * inv_std;
                }
                double n = static_cast<double>(c);
                double* gar = ga.v.data() + i * c;
                for (size_t j = 0; j < c; ++j) {
                    double gy = gr[j] * tg2.v[j];
                    double xhat = (x[j] - mean) * inv_std;
                    gar[j] += inv_std * (gy - sum_gy / n - xhat * sum_gyx / n);
                }
            }
        }
    });
    return {id};
}

Value Tape::gelu(Value a) {
    check(a);
    Tensor out = data(a);
    for (double& x : out.v) {
        x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    int id = push(std::move(out), needs(a), [a](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& ta2 = t.data(a);
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < g.v.size(); ++i) {
            double x = ta2.v[i];
            double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga.v[i] += g.v[i] * (phi + x * pdf);
        }
    });
    return {id};
}

Value Tape::relu(Value a) {
    check(a);
    Tensor out = data(a);
    for (double& x : out.v) x = std::max(0.0, x);
    int id = push(std::move(out), needs(a), [a](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& ta2 = t.data(a);
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < g.v.size(); ++i) {
            if (ta2.v[i] > 0.0) ga.v[i] += g.v[i];
        }
    });
    return {id};
}

Value Tape::concat_cols(Value a, Value b) {
    check(a);
    check(b);
    const Tensor& ta = data(a);
    const Tensor& tb = data(b);
    if (ta.rows() != tb.rows()) {
        throw ShapeError("concat_cols: row counts differ: " + ta.shape_str() + " vs " +
                         tb.shape_str());
    }
    size_t r = ta.rows(), ca = ta.cols(), cb = tb.cols();
    Tensor out({r, ca + cb});
    for (size_t i = 0; i < r; ++i) {
        double* o = out.v.data() + i * (ca + cb);
        std::copy(ta.v.data() + i * ca, ta.v.data() + (i + 1) * ca, o);
        std::copy(tb.v.data() + i * cb, tb.v.data() + (i + 1) * cb, o + ca);
    }
    bool ng = needs(a) || needs(b);
    int id = push(std::move(out), ng, [a, b, r, ca, cb](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.needs(a)) {
            Tensor& ga = t.grad_accum(a.id);
            for (size_t i = 0; i < r; ++i) {
                const double* gr = g.v.data() + i * (ca + cb);
                double* gar = ga.v.data() + i * ca;
                for (size_t j = 0; j < ca; ++j) gar[j] += gr[j];
            }
        }
        if (t.needs(b)) {
            Tensor& gb = t.grad_accum(b.id);
            for (size_t i = 0; i < r; ++i) {
                const double* gr = g.v.data() + i * (ca + cb) + ca;
                double* gbr = gb.v.data() + i * cb;
                for (size_t j = 0; j < cb; ++j) gbr[j] += gr[j];
            }
        }
    });
    return {id};
}

Value Tape::concat_rows(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    size_t c = data(parts[0]).cols();
    size_t total = 0;
    bool ng = false;
    for (Value p : parts) {
        check(p);
        if (data(p).cols() != c) {
            throw ShapeError("concat_rows: column counts differ");
        }
        total += data(p).rows();
        ng = ng || needs(p);
    }
    Tensor out({total, c});
    size_t at = 0;
    for (Value p : parts) {
        const Tensor& tp = data(p);
        std::copy(tp.v.begin(), tp.v.end(), out.v.begin() + at * c);
        at += tp.rows();
    }
    auto parts_copy = std::make_shared<std::vector<Value>>(parts);
    int id = push(std::move(out), ng, [parts_copy, c](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        size_t at2 = 0;
        for (Value p : *parts_copy) {
            size_t pr = t.data(p).rows();
            if (t.needs(p)) {
                Tensor& gp = t.grad_accum(p.id);
                for (size_t i = 0; i < pr * c; ++i) {
                    gp.v[i] += g.v[at2 * c + i];
                }
            }
            at2 += pr;
        }
    });
    return {id};
}

Value Tape::slice_cols(Value a, size_t start, size_t len) {
    check(a);
    const Tensor& ta = data(a);
    size_t r = ta.rows(), c = ta.cols();
    if (start + len > c) throw ShapeError("slice_cols out of range");
    Tensor out({r, len});
    for (size_t i = 0; i < r; ++i) {
        std::copy(ta.v.data() + i * c + start, ta.v.data() + i * c + start + len,
                  out.v.data() + i * len);
    }
    int id = push(std::move(out), needs(a), [a, start, len, r, c](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < r; ++i) {
            for (size_t j = 0; j < len; ++j) {
                ga.v[i * c + start + j] += g.v[i * len + j];
            }
        }
    });
    return {id};
}

Value Tape::slice_rows(Value a, size_t start, size_t len) {
    check(a);
    const Tensor& ta = data(a);
    size_t r = ta.rows(), c = ta.cols();
    if (start + len > r) throw ShapeError("slice_rows out of range");
    Tensor out({len, c});
    std::copy(ta.v.data() + start * c, ta.v.data() + (start + len) * c, out.v.data());
    int id = push(std::move(out), needs(a), [a, start, len, c](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < len * c; ++i) ga.v[start * c + i] += g.v[i];
    });
    return {id};
}

Value Tape::gather_rows(Value a, std::vector<size_t> rows) {
    check(a);
    const Tensor& ta = data(a);
    size_t c = ta.cols();
    for (size_t r : rows) {
        if (r >= ta.rows()) throw ShapeError("gather_rows: row index out of range");
    }
    Tensor out({rows.size(), c});
    for (size_t i = 0; i < rows.size(); ++i) {
        std::copy(ta.v.data() + rows[i] * c, ta.v.data() + (rows[i] + 1) * c,
                  out.v.data() + i * c);
    }
    auto rows_copy = std::make_shared<std::vector<size_t>>(std::move(rows));
    int id = push(std::move(out), needs(a), [a, rows_copy, c](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_accum(a.id);
        for (size_t i = 0; i < rows_copy->size(); ++i) {
            size_t r = (*rows_copy)[i];
            for (size_t j = 0; j < c; ++j) ga.v[r * c + j] += g.v[i * c + j];
        }
    });
    return {id};
}

Value Tape::scatter_add_rows(Value a, std::vector<size_t> dest, size_t out_rows) {
    check(a);
    const Tensor& ta = data(a);
    size_t c = ta.cols();
    if (dest.size() != ta.rows()) {
        throw ShapeError("scatter_add_rows: need one destination per source row");
    }
    for (size_t r : dest) {
        if (r >= out_rows) throw ShapeError("scatter_add_rows: destination out of range");
    }
    Tensor out({out_rows, c});
    for (size_t i = 0; i < dest.size(); ++i) {
        double* o = out.v.data() + dest[i] * c;
        const double* src = ta.v.data() + i * c;
        for (size_t j = 0; j < c; ++j) o[j] += src[j];
    }
    auto dest_copy = std::make_shared<std::vector<size_t>>(std::move(dest));
    int id = push(std::move(out), needs(a), [a, dest_copy, c](Tape& t, int self) {
        if (!t.needs(a)) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_accum(a.id);
        // Coalescing backward: every source row sharing a destination gets
        // the same upstream gradient.
        for (size_t i = 0; i < dest_copy->size(); ++i) {
            size_t r = (*dest_copy)[i];
            for (size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[r * c + j];
        }
    });
    return {id};
}

Value Tape::sum_all(Value a) {
    check(a);
    const Tensor& ta = data(a);
    double s = 0.0;
    for (double x : ta.v) s += x;
    int id = push(Tensor::scalar(s), needs(a), [a](Tape& t, int self) {
        if (!t.needs(a)) return;
        double g = t.nodes_[self].grad.v[0];
        Tensor& ga = t.grad_accum(a.id);
        for (double& x : ga.v) x += g;
    });
    return {id};
}

Value Tape::cross_entropy_mean(Value logits, std::vector<int> labels) {
    check(logits);
    const Tensor& tl = data(logits);
    size_t n = tl.rows(), c = tl.cols();
    if (labels.size() != n) {
        throw ShapeError("cross_entropy: need one label per row");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<size_t>(y) >= c) {
            throw ShapeError("cross_entropy: label out of range");
        }
    }
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double* row = tl.v.data() + i * c;
        double mx = row[0];
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        total += mx + std::log(sum) - row[labels[i]];
    }
    total /= static_cast<double>(n);
    auto labels_copy = std::make_shared<std::vector<int>>(std::move(labels));
    int id = push(Tensor::scalar(total), needs(logits),
                  [logits, labels_copy, n, c](Tape& t, int self) {
                      if (!t.needs(logits)) return;
                      double g = t.nodes_[self].grad.v[0] / static_cast<double>(n);
                      const Tensor& tl2 = t.data(logits);
                      Tensor& gl = t.grad_accum(logits.id);
                      for (size_t i = 0; i < n; ++i) {
                          const double* row = tl2.v.data() + i * c;
                          double* grow = gl.v.data() + i * c;
                          double mx = row[0];
                          for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
                          double sum = 0.0;
                          for (size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
                          double inv = 1.0 / sum;
                          for (size_t j = 0; j < c; ++j) {
                              grow[j] += g * std::exp(row[j] - mx) * inv;
                          }
                          grow[(*labels_copy)[i]] -= g;
                      }
                  });
    return {id};
}

Value Tape::embedding_lookup(Value table, const std::vector<int>& ids) {
    std::vector<size_t> rows;
    rows.reserve(ids.size());
    for (int id : ids) rows.push_back(static_cast<size_t>(id));
    return gather_rows(table, std::move(rows));
}

Value Tape::weighted_sum(const std::vector<Value>& parts,
                         const std::vector<Value>& weights) {
    if (parts.empty() || parts.size() != weights.size()) {
        throw ShapeError("weighted_sum: need matching parts and weights");
    }
    Value acc = scale(parts[0], weights[0]);
    for (size_t i = 1; i < parts.size(); ++i) {
        acc = add(acc, scale(parts[i], weights[i]));
    }
    return acc;
}

void Tape::backward(Value root) {
    check(root);
    if (consumed_) {
        throw Error("tape already consumed: backward may run only once per forward");
    }
    consumed_ = true;
    if (data(root).numel() != 1) {
        throw ShapeError("backward root must be scalar, got " +
                         data(root).shape_str());
    }
    grad_accum(root.id).v[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || !n.has_grad) continue;
        if (n.back) n.back(*this, i);
        if (n.sink) {
            for (size_t j = 0; j < n.grad.v.size(); ++j) n.sink->v[j] += n.grad.v[j];
        }
    }
}

}  // namespace sdtm
