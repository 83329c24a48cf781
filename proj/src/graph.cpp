#include "wsseg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "wsseg/errors.hpp"

namespace wsseg {

namespace {

double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

}  // namespace

TensorRef Graph::make(Mat value, bool needs_grad, std::function<void(Graph&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    return TensorRef{id, nodes_[id].value.rows, nodes_[id].value.cols};
}

TensorRef Graph::input(Mat value) { return make(std::move(value), false, nullptr); }

TensorRef Graph::param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) {
        const int id = it->second;
        return TensorRef{id, nodes_[id].value.rows, nodes_[id].value.cols};
    }
    TensorRef t = make(p.value, true, nullptr);
    param_nodes_.emplace(&p, t.id);
    bindings_.emplace_back(t.id, &p);
    return t;
}

// NOTE on closures: they capture node ids (not references) and look nodes up
// through the Graph& at call time, so vector reallocation is safe.

TensorRef Graph::add(TensorRef a, TensorRef b) {
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[b.id].value;
    require_same_shape(A, B, "add");
    Mat C = A;
    for (size_t i = 0; i < C.a.size(); ++i) C.a[i] += B.a[i];
    const bool ng = needs(a) || needs(b);
    const int ai = a.id, bi = b.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, bi, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            if (g.nodes_[ai].needs_grad) add_scaled(g.nodes_[ai].grad, dC);
            if (g.nodes_[bi].needs_grad) add_scaled(g.nodes_[bi].grad, dC);
        };
    }
    return out;
}

TensorRef Graph::add_rowvec(TensorRef a, TensorRef bias) {
    const Mat& A = nodes_[a.id].value;
    const Mat& V = nodes_[bias.id].value;
    if (V.rows != 1 || V.cols != A.cols) {
        throw DataError("add_rowvec: bias " + V.shape_str() + " vs " + A.shape_str());
    }
    Mat C = A;
    for (int i = 0; i < C.rows; ++i)
        for (int j = 0; j < C.cols; ++j) C.at(i, j) += V.at(0, j);
    const bool ng = needs(a) || needs(bias);
    const int ai = a.id, bi = bias.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, bi, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            if (g.nodes_[ai].needs_grad) add_scaled(g.nodes_[ai].grad, dC);
            if (g.nodes_[bi].needs_grad) {
                Mat& dV = g.nodes_[bi].grad;
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < dC.cols; ++j) dV.at(0, j) += dC.at(i, j);
            }
        };
    }
    return out;
}

TensorRef Graph::scale(TensorRef a, double s) {
    const Mat& A = nodes_[a.id].value;
    Mat C = A;
    for (double& v : C.a) v *= s;
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, ci, s](Graph& g) {
            add_scaled(g.nodes_[ai].grad, g.nodes_[ci].grad, s);
        };
    }
    return out;
}

TensorRef Graph::hadamard(TensorRef a, TensorRef b) {
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[b.id].value;
    require_same_shape(A, B, "hadamard");
    Mat C = A;
    for (size_t i = 0; i < C.a.size(); ++i) C.a[i] *= B.a[i];
    const bool ng = needs(a) || needs(b);
    const int ai = a.id, bi = b.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, bi, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            const Mat& A2 = g.nodes_[ai].value;
            const Mat& B2 = g.nodes_[bi].value;
            if (g.nodes_[ai].needs_grad) {
                Mat& dA = g.nodes_[ai].grad;
                for (size_t i = 0; i < dC.a.size(); ++i) dA.a[i] += dC.a[i] * B2.a[i];
            }
            if (g.nodes_[bi].needs_grad) {
                Mat& dB = g.nodes_[bi].grad;
                for (size_t i = 0; i < dC.a.size(); ++i) dB.a[i] += dC.a[i] * A2.a[i];
            }
        };
    }
    return out;
}

TensorRef Graph::mul_scalar(TensorRef a, TensorRef s) {
    const Mat& A = nodes_[a.id].value;
    const Mat& S = nodes_[s.id].value;
    if (S.rows != 1 || S.cols != 1) throw DataError("mul_scalar: scalar must be [1x1]");
    const double sv = S.at(0, 0);
    Mat C = A;
    for (double& v : C.a) v *= sv;
    const bool ng = needs(a) || needs(s);
    const int ai = a.id, si = s.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, si, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            const Mat& A2 = g.nodes_[ai].value;
            const double sv2 = g.nodes_[si].value.at(0, 0);
            if (g.nodes_[ai].needs_grad) add_scaled(g.nodes_[ai].grad, dC, sv2);
            if (g.nodes_[si].needs_grad) {
                double acc = 0.0;
                for (size_t i = 0; i < dC.a.size(); ++i) acc += dC.a[i] * A2.a[i];
                g.nodes_[si].grad.at(0, 0) += acc;
            }
        };
    }
    return out;
}

TensorRef Graph::matmul(TensorRef a, TensorRef b) {
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[b.id].value;
    Mat C = mat_mul(A, B);
    const bool ng = needs(a) || needs(b);
    const int ai = a.id, bi = b.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, bi, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            if (g.nodes_[ai].needs_grad) {
                Mat dA = mat_mul_nt(dC, g.nodes_[bi].value);  // dC * B^T
                add_scaled(g.nodes_[ai].grad, dA);
            }
            if (g.nodes_[bi].needs_grad) {
                Mat dB = mat_mul_tn(g.nodes_[ai].value, dC);  // A^T * dC
                add_scaled(g.nodes_[bi].grad, dB);
            }
        };
    }
    return out;
}

TensorRef Graph::matmul_nt(TensorRef a, TensorRef b) {
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[b.id].value;
    Mat C = mat_mul_nt(A, B);
    const bool ng = needs(a) || needs(b);
    const int ai = a.id, bi = b.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, bi, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            if (g.nodes_[ai].needs_grad) {
                Mat dA = mat_mul(dC, g.nodes_[bi].value);  // dC * B
                add_scaled(g.nodes_[ai].grad, dA);
            }
            if (g.nodes_[bi].needs_grad) {
                Mat dB = mat_mul_tn(dC, g.nodes_[ai].value);  // dC^T * A
                add_scaled(g.nodes_[bi].grad, dB);
            }
        };
    }
    return out;
}

TensorRef Graph::transpose_of(TensorRef a) {
    const Mat& A = nodes_[a.id].value;
    Mat C = transpose(A);
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            Mat& dA = g.nodes_[ai].grad;
            for (int i = 0; i < dC.rows; ++i)
                for (int j = 0; j < dC.cols; ++j) dA.at(j, i) += dC.at(i, j);
        };
    }
    return out;
}

TensorRef Graph::relu(TensorRef a) {
    const Mat& A = nodes_[a.id].value;
    Mat C = A;
    for (double& v : C.a)
        if (v < 0.0) v = 0.0;
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            const Mat& A2 = g.nodes_[ai].value;
            Mat& dA = g.nodes_[ai].grad;
            for (size_t i = 0; i < dC.a.size(); ++i)
                if (A2.a[i] > 0.0) dA.a[i] += dC.a[i];
        };
    }
    return out;
}

TensorRef Graph::gelu(TensorRef a) {
    const Mat& A = nodes_[a.id].value;
    Mat C = A;
    for (double& v : C.a) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            const Mat& A2 = g.nodes_[ai].value;
            Mat& dA = g.nodes_[ai].grad;
            for (size_t i = 0; i < dC.a.size(); ++i) {
                const double x = A2.a[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                dA.a[i] += dC.a[i] * (cdf + x * pdf);
            }
        };
    }
    return out;
}

TensorRef Graph::row_softmax(TensorRef a) {
    const Mat& A = nodes_[a.id].value;
    Mat C(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        double mx = A.at(i, 0);
        for (int j = 1; j < A.cols; ++j) mx = std::max(mx, A.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < A.cols; ++j) {
            const double e = std::exp(A.at(i, j) - mx);
            C.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < A.cols; ++j) C.at(i, j) /= sum;
    }
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            const Mat& Y = g.nodes_[ci].value;
            Mat& dA = g.nodes_[ai].grad;
            for (int i = 0; i < Y.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < Y.cols; ++j) dot += dC.at(i, j) * Y.at(i, j);
                for (int j = 0; j < Y.cols; ++j)
                    dA.at(i, j) += Y.at(i, j) * (dC.at(i, j) - dot);
            }
        };
    }
    return out;
}

TensorRef Graph::layer_norm(TensorRef a, TensorRef gamma, TensorRef beta, double eps) {
    const Mat& A = nodes_[a.id].value;
    const Mat& G = nodes_[gamma.id].value;
    const Mat& B = nodes_[beta.id].value;
    if (G.rows != 1 || G.cols != A.cols || B.rows != 1 || B.cols != A.cols) {
        throw DataError("layer_norm: affine params must be [1x" + std::to_string(A.cols) + "]");
    }
    const int n = A.cols;
    Mat C(A.rows, n);
    Mat xhat(A.rows, n);
    std::vector<double> inv_std(A.rows);
    for (int i = 0; i < A.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += A.at(i, j);
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = A.at(i, j) - mean;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < n; ++j) {
            const double xh = (A.at(i, j) - mean) * is;
            xhat.at(i, j) = xh;
            C.at(i, j) = G.at(0, j) * xh + B.at(0, j);
        }
    }
    const bool ng = needs(a) || needs(gamma) || needs(beta);
    const int ai = a.id, gi = gamma.id, bi = beta.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        auto xh = std::make_shared<Mat>(std::move(xhat));
        auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
        nodes_[ci].backprop = [ai, gi, bi, ci, xh, is, n](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            const Mat& G2 = g.nodes_[gi].value;
            if (g.nodes_[gi].needs_grad) {
                Mat& dG = g.nodes_[gi].grad;
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < n; ++j) dG.at(0, j) += dC.at(i, j) * xh->at(i, j);
            }
            if (g.nodes_[bi].needs_grad) {
                Mat& dB = g.nodes_[bi].grad;
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < n; ++j) dB.at(0, j) += dC.at(i, j);
            }
            if (g.nodes_[ai].needs_grad) {
                Mat& dA = g.nodes_[ai].grad;
                for (int i = 0; i < dC.rows; ++i) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double dxh = dC.at(i, j) * G2.at(0, j);
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xh->at(i, j);
                    }
                    mean_dxhat /= n;
                    mean_dxhat_xhat /= n;
                    for (int j = 0; j < n; ++j) {
                        const double dxh = dC.at(i, j) * G2.at(0, j);
                        dA.at(i, j) += (*is)[i] * (dxh - mean_dxhat -
                                                   xh->at(i, j) * mean_dxhat_xhat);
                    }
                }
            }
        };
    }
    return out;
}

TensorRef Graph::slice_cols(TensorRef a, int c0, int c1) {
    const Mat& A = nodes_[a.id].value;
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw DataError("slice_cols: bad range");
    Mat C(A.rows, c1 - c0);
    for (int i = 0; i < A.rows; ++i)
        for (int j = c0; j < c1; ++j) C.at(i, j - c0) = A.at(i, j);
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, ci, c0](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            Mat& dA = g.nodes_[ai].grad;
            for (int i = 0; i < dC.rows; ++i)
                for (int j = 0; j < dC.cols; ++j) dA.at(i, c0 + j) += dC.at(i, j);
        };
    }
    return out;
}

TensorRef Graph::concat_cols(TensorRef a, TensorRef b) {
    const Mat& A = nodes_[a.id].value;
    const Mat& B = nodes_[b.id].value;
    if (A.rows != B.rows) throw DataError("concat_cols: row mismatch");
    Mat C(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
        for (int j = 0; j < B.cols; ++j) C.at(i, A.cols + j) = B.at(i, j);
    }
    const bool ng = needs(a) || needs(b);
    const int ai = a.id, bi = b.id;
    const int acols = A.cols;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, bi, ci, acols](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            if (g.nodes_[ai].needs_grad) {
                Mat& dA = g.nodes_[ai].grad;
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = 0; j < acols; ++j) dA.at(i, j) += dC.at(i, j);
            }
            if (g.nodes_[bi].needs_grad) {
                Mat& dB = g.nodes_[bi].grad;
                for (int i = 0; i < dC.rows; ++i)
                    for (int j = acols; j < dC.cols; ++j) dB.at(i, j - acols) += dC.at(i, j);
            }
        };
    }
    return out;
}

TensorRef Graph::patchify(TensorRef a, int h, int w, int p) {
    const Mat& A = nodes_[a.id].value;
    if (A.rows != h * w) throw DataError("patchify: token count mismatch");
    if (h % p != 0 || w % p != 0) throw DataError("patchify: dims not divisible by patch");
    const int c = A.cols;
    const int ph = h / p, pw = w / p;
    Mat C(ph * pw, p * p * c);
    for (int pi = 0; pi < ph; ++pi) {
        for (int pj = 0; pj < pw; ++pj) {
            const int orow = pi * pw + pj;
            for (int di = 0; di < p; ++di) {
                for (int dj = 0; dj < p; ++dj) {
                    const int irow = (pi * p + di) * w + (pj * p + dj);
                    const int base = (di * p + dj) * c;
                    for (int k = 0; k < c; ++k) C.at(orow, base + k) = A.at(irow, k);
                }
            }
        }
    }
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, ci, h, w, p, c](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            Mat& dA = g.nodes_[ai].grad;
            const int ph2 = h / p, pw2 = w / p;
            (void)ph2;
            for (int pi = 0; pi < h / p; ++pi)
                for (int pj = 0; pj < w / p; ++pj) {
                    const int orow = pi * pw2 + pj;
                    for (int di = 0; di < p; ++di)
                        for (int dj = 0; dj < p; ++dj) {
                            const int irow = (pi * p + di) * w + (pj * p + dj);
                            const int base = (di * p + dj) * c;
                            for (int k = 0; k < c; ++k)
                                dA.at(irow, k) += dC.at(orow, base + k);
                        }
                }
        };
    }
    return out;
}

TensorRef Graph::avg_pool_tokens(TensorRef a, int h, int w, int r) {
    const Mat& A = nodes_[a.id].value;
    if (A.rows != h * w) throw DataError("avg_pool_tokens: token count mismatch");
    if (r == 1) return a;
    if (h % r != 0 || w % r != 0) throw DataError("avg_pool_tokens: dims not divisible");
    const int c = A.cols;
    const int oh = h / r, ow = w / r;
    const double inv = 1.0 / (r * r);
    Mat C(oh * ow, c);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int orow = (i / r) * ow + (j / r);
            const int irow = i * w + j;
            for (int k = 0; k < c; ++k) C.at(orow, k) += A.at(irow, k) * inv;
        }
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [ai, ci, h, w, r, c, inv](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            Mat& dA = g.nodes_[ai].grad;
            const int ow2 = w / r;
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const int orow = (i / r) * ow2 + (j / r);
                    const int irow = i * w + j;
                    for (int k = 0; k < c; ++k) dA.at(irow, k) += dC.at(orow, k) * inv;
                }
        };
    }
    return out;
}

TensorRef Graph::broadcast_row(TensorRef v, int n) {
    const Mat& V = nodes_[v.id].value;
    if (V.rows != 1) throw DataError("broadcast_row: expects a [1xC] row");
    Mat C(n, V.cols);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < V.cols; ++j) C.at(i, j) = V.at(0, j);
    const bool ng = needs(v);
    const int vi = v.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        nodes_[ci].backprop = [vi, ci](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            Mat& dV = g.nodes_[vi].grad;
            for (int i = 0; i < dC.rows; ++i)
                for (int j = 0; j < dC.cols; ++j) dV.at(0, j) += dC.at(i, j);
        };
    }
    return out;
}

TensorRef Graph::global_max_rows(TensorRef a) {
    const Mat& A = nodes_[a.id].value;
    Mat C(1, A.cols);
    std::vector<int> argmax(A.cols, 0);
    for (int j = 0; j < A.cols; ++j) {
        double mx = A.at(0, j);
        int arg = 0;
        for (int i = 1; i < A.rows; ++i) {
            if (A.at(i, j) > mx) {  // strict: ties resolve to the first row
                mx = A.at(i, j);
                arg = i;
            }
        }
        C.at(0, j) = mx;
        argmax[j] = arg;
    }
    const bool ng = needs(a);
    const int ai = a.id;
    TensorRef out = make(std::move(C), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        auto am = std::make_shared<std::vector<int>>(std::move(argmax));
        nodes_[ci].backprop = [ai, ci, am](Graph& g) {
            const Mat& dC = g.nodes_[ci].grad;
            Mat& dA = g.nodes_[ai].grad;
            for (int j = 0; j < dC.cols; ++j) dA.at((*am)[j], j) += dC.at(0, j);
        };
    }
    return out;
}

TensorRef Graph::multilabel_bce(TensorRef logits, const std::vector<double>& target) {
    const Mat& X = nodes_[logits.id].value;
    if (X.rows != 1 || static_cast<size_t>(X.cols) != target.size()) {
        throw DataError("multilabel_bce: logits/target size mismatch");
    }
    const int k = X.cols;
    double loss = 0.0;
    for (int j = 0; j < k; ++j) {
        const double x = X.at(0, j);
        const double y = target[j];
        loss += y * softplus(-x) + (1.0 - y) * softplus(x);
    }
    loss /= k;
    const bool ng = needs(logits);
    const int xi = logits.id;
    TensorRef out = make(Mat(1, 1, loss), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        auto tgt = std::make_shared<std::vector<double>>(target);
        nodes_[ci].backprop = [xi, ci, tgt, k](Graph& g) {
            const double dl = g.nodes_[ci].grad.at(0, 0);
            const Mat& X2 = g.nodes_[xi].value;
            Mat& dX = g.nodes_[xi].grad;
            for (int j = 0; j < k; ++j)
                dX.at(0, j) += dl * (sigmoid(X2.at(0, j)) - (*tgt)[j]) / k;
        };
    }
    return out;
}

TensorRef Graph::softmax_ce(TensorRef logits, const std::vector<double>& onehot) {
    const Mat& X = nodes_[logits.id].value;
    if (X.rows != 1 || static_cast<size_t>(X.cols) != onehot.size()) {
        throw DataError("softmax_ce: logits/target size mismatch");
    }
    const int n = X.cols;
    double mx = X.at(0, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, X.at(0, j));
    double lse = 0.0;
    for (int j = 0; j < n; ++j) lse += std::exp(X.at(0, j) - mx);
    lse = mx + std::log(lse);
    double loss = 0.0;
    for (int j = 0; j < n; ++j) loss += onehot[j] * (lse - X.at(0, j));
    const bool ng = needs(logits);
    const int xi = logits.id;
    TensorRef out = make(Mat(1, 1, loss), ng, nullptr);
    const int ci = out.id;
    if (ng) {
        auto tgt = std::make_shared<std::vector<double>>(onehot);
        nodes_[ci].backprop = [xi, ci, tgt, n](Graph& g) {
            const double dl = g.nodes_[ci].grad.at(0, 0);
            const Mat& X2 = g.nodes_[xi].value;
            Mat& dX = g.nodes_[xi].grad;
            double mx2 = X2.at(0, 0);
            for (int j = 1; j < n; ++j) mx2 = std::max(mx2, X2.at(0, j));
            double z = 0.0;
            for (int j = 0; j < n; ++j) z += std::exp(X2.at(0, j) - mx2);
            double ysum = 0.0;
            for (int j = 0; j < n; ++j) ysum += (*tgt)[j];
            for (int j = 0; j < n; ++j) {
                const double p = std::exp(X2.at(0, j) - mx2) / z;
                dX.at(0, j) += dl * (ysum * p - (*tgt)[j]);
            }
        };
    }
    return out;
}

void Graph::backward(TensorRef scalar_loss) {
    const Mat& L = nodes_[scalar_loss.id].value;
    if (L.rows != 1 || L.cols != 1) throw DataError("backward: loss must be scalar");
    for (auto& n : nodes_) {
        if (n.needs_grad) {
            n.grad = Mat(n.value.rows, n.value.cols);
        }
    }
    nodes_[scalar_loss.id].grad.at(0, 0) = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        if (nodes_[i].needs_grad && nodes_[i].backprop) nodes_[i].backprop(*this);
    }
    for (auto& [id, p] : bindings_) {
        add_scaled(p->grad, nodes_[id].grad);
    }
}

}  // namespace wsseg
