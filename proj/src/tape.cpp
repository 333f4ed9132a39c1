#include "dla/tape.hpp"

#include <algorithm>
#include <cmath>

namespace dla::numeric {

namespace {

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (!a->same_shape(*b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
}

}  // namespace

TensorPtr Tape::make_output(std::vector<int> shape,
                            std::initializer_list<const TensorPtr*> inputs) {
    auto out = tensor(std::move(shape));
    bool live = false;
    for (const TensorPtr* in : inputs) live = live || (*in)->grad_live();
    out->node_output_live_ = live;
    return out;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->ndim() != 2 || b->ndim() != 2 || a->dim(1) != b->dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) + " and " +
                         shape_str(b->shape));
    }
    const int m = a->dim(0), k = a->dim(1), n = b->dim(1);
    auto out = make_output({m, n}, {&a, &b});
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    double* od = out->data.data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = ad[i * k + p];
            const double* brow = bd + p * n;
            double* orow = od + i * n;
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    push([a, b, out, m, k, n] {
        if (!out->grad_live()) return;
        if (a->grad_live()) {
            a->ensure_grad();
            for (int i = 0; i < m; ++i) {
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = out->grad.data() + i * n;
                    const double* brow = b->data.data() + p * n;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    a->grad[i * k + p] += acc;
                }
            }
        }
        if (b->grad_live()) {
            b->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double* grow = out->grad.data() + i * n;
                for (int p = 0; p < k; ++p) {
                    const double aip = a->data[i * k + p];
                    double* brow = b->grad.data() + p * n;
                    for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
                }
            }
        }
    });
    return out;
}

TensorPtr Tape::matvec(const TensorPtr& a, const TensorPtr& x) {
    if (a->ndim() != 2 || x->ndim() != 1 || a->dim(1) != x->dim(0)) {
        throw ShapeError("matvec: incompatible shapes " + shape_str(a->shape) + " and " +
                         shape_str(x->shape));
    }
    const int m = a->dim(0), k = a->dim(1);
    auto out = make_output({m}, {&a, &x});
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* arow = a->data.data() + i * k;
        for (int p = 0; p < k; ++p) acc += arow[p] * x->data[p];
        out->data[i] = acc;
    }
    push([a, x, out, m, k] {
        if (!out->grad_live()) return;
        if (a->grad_live()) {
            a->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double g = out->grad[i];
                double* arow = a->grad.data() + i * k;
                for (int p = 0; p < k; ++p) arow[p] += g * x->data[p];
            }
        }
        if (x->grad_live()) {
            x->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double g = out->grad[i];
                const double* arow = a->data.data() + i * k;
                for (int p = 0; p < k; ++p) x->grad[p] += g * arow[p];
            }
        }
    });
    return out;
}

TensorPtr Tape::transpose(const TensorPtr& a) {
    if (a->ndim() != 2) throw ShapeError("transpose: expected 2-d tensor");
    const int m = a->dim(0), n = a->dim(1);
    auto out = make_output({n, m}, {&a});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[j * m + i] = a->data[i * n + j];
    push([a, out, m, n] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[j * m + i];
    });
    return out;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "add");
    auto out = make_output(a->shape, {&a, &b});
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    push([a, b, out] {
        if (!out->grad_live()) return;
        if (a->grad_live()) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->grad_live()) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "sub");
    auto out = make_output(a->shape, {&a, &b});
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] - b->data[i];
    push([a, b, out] {
        if (!out->grad_live()) return;
        if (a->grad_live()) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
        }
        if (b->grad_live()) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] -= out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "mul");
    auto out = make_output(a->shape, {&a, &b});
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    push([a, b, out] {
        if (!out->grad_live()) return;
        if (a->grad_live()) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
        }
        if (b->grad_live()) {
            b->ensure_grad();
            for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
        }
    });
    return out;
}

TensorPtr Tape::scale(const TensorPtr& a, double c) {
    auto out = make_output(a->shape, {&a});
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = c * a->data[i];
    push([a, out, c] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += c * out->grad[i];
    });
    return out;
}

TensorPtr Tape::scalar_mul(const TensorPtr& a, const TensorPtr& s) {
    if (s->size() != 1) throw ShapeError("scalar_mul: s must be 1-element");
    auto out = make_output(a->shape, {&a, &s});
    const double sv = s->data[0];
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = sv * a->data[i];
    push([a, s, out, sv] {
        if (!out->grad_live()) return;
        if (a->grad_live()) {
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += sv * out->grad[i];
        }
        if (s->grad_live()) {
            s->ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < a->size(); ++i) acc += out->grad[i] * a->data[i];
            s->grad[0] += acc;
        }
    });
    return out;
}

TensorPtr Tape::relu(const TensorPtr& a) {
    auto out = make_output(a->shape, {&a});
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
    push([a, out] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) {
            if (a->data[i] > 0.0) a->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr Tape::softmax(const TensorPtr& a, int axis) {
    if (axis < 0 || axis >= a->ndim()) throw ShapeError("softmax: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(a->dim(i));
    for (int i = axis + 1; i < a->ndim(); ++i) inner *= static_cast<std::size_t>(a->dim(i));
    const std::size_t n = static_cast<std::size_t>(a->dim(axis));

    auto out = make_output(a->shape, {&a});
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = a->data[base];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, a->data[base + i * inner]);
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(a->data[base + i * inner] - mx);
                out->data[base + i * inner] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (std::size_t i = 0; i < n; ++i) out->data[base + i * inner] *= inv;
        }
    }
    push([a, out, outer, inner, n] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    dot += out->grad[base + i * inner] * out->data[base + i * inner];
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t idx = base + i * inner;
                    a->grad[idx] += out->data[idx] * (out->grad[idx] - dot);
                }
            }
        }
    });
    return out;
}

TensorPtr Tape::layer_norm(const TensorPtr& a, const TensorPtr& gain, const TensorPtr& bias,
                           double eps) {
    const int n = a->shape.back();
    if (gain->ndim() != 1 || bias->ndim() != 1 || gain->dim(0) != n || bias->dim(0) != n) {
        throw ShapeError("layer_norm: gain/bias must be 1-d of the last-axis length");
    }
    if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
    const std::size_t slices = a->size() / static_cast<std::size_t>(n);
    auto out = make_output(a->shape, {&a, &gain, &bias});
    // keep per-slice normalized values and inverse stddev for the backward pass
    auto xhat = std::make_shared<std::vector<double>>(a->size());
    auto inv_std = std::make_shared<std::vector<double>>(slices);
    for (std::size_t s = 0; s < slices; ++s) {
        const double* xs = a->data.data() + s * n;
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += xs[i];
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = xs[i] - mean;
            var += d * d;
        }
        var /= n;  // population variance
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[s] = inv;
        for (int i = 0; i < n; ++i) {
            const double xh = (xs[i] - mean) * inv;
            (*xhat)[s * n + i] = xh;
            out->data[s * n + i] = xh * gain->data[i] + bias->data[i];
        }
    }
    push([a, gain, bias, out, xhat, inv_std, slices, n] {
        if (!out->grad_live()) return;
        for (std::size_t s = 0; s < slices; ++s) {
            const double* go = out->grad.data() + s * n;
            const double* xh = xhat->data() + s * n;
            if (gain->grad_live()) {
                gain->ensure_grad();
                for (int i = 0; i < n; ++i) gain->grad[i] += go[i] * xh[i];
            }
            if (bias->grad_live()) {
                bias->ensure_grad();
                for (int i = 0; i < n; ++i) bias->grad[i] += go[i];
            }
            if (a->grad_live()) {
                a->ensure_grad();
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double dxh = go[i] * gain->data[i];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xh[i];
                }
                mean_dxh /= n;
                mean_dxh_xh /= n;
                const double inv = (*inv_std)[s];
                for (int i = 0; i < n; ++i) {
                    const double dxh = go[i] * gain->data[i];
                    a->grad[s * n + i] += inv * (dxh - mean_dxh - xh[i] * mean_dxh_xh);
                }
            }
        }
    });
    return out;
}

TensorPtr Tape::bilinear_sample(const TensorPtr& map, const TensorPtr& pos) {
    if (map->ndim() != 3) throw ShapeError("bilinear_sample: map must be H x W x C");
    if (pos->ndim() != 1 || pos->dim(0) != 2) throw ShapeError("bilinear_sample: pos must be [2]");
    const int h = map->dim(0), w = map->dim(1), c = map->dim(2);

    const double r_raw = pos->data[0];
    const double c_raw = pos->data[1];
    const double r = std::clamp(r_raw, 0.0, static_cast<double>(h - 1));
    const double cc = std::clamp(c_raw, 0.0, static_cast<double>(w - 1));
    const int r0 = std::min(static_cast<int>(std::floor(r)), std::max(h - 2, 0));
    const int c0 = std::min(static_cast<int>(std::floor(cc)), std::max(w - 2, 0));
    const int r1 = std::min(r0 + 1, h - 1);
    const int c1 = std::min(c0 + 1, w - 1);
    const double fr = r - r0;
    const double fc = cc - c0;

    auto out = make_output({c}, {&map, &pos});
    const double w00 = (1.0 - fr) * (1.0 - fc), w01 = (1.0 - fr) * fc;
    const double w10 = fr * (1.0 - fc), w11 = fr * fc;
    for (int ch = 0; ch < c; ++ch) {
        out->data[ch] = w00 * map->at(r0, c0, ch) + w01 * map->at(r0, c1, ch) +
                        w10 * map->at(r1, c0, ch) + w11 * map->at(r1, c1, ch);
    }

    const bool r_inside = r_raw >= 0.0 && r_raw <= static_cast<double>(h - 1);
    const bool c_inside = c_raw >= 0.0 && c_raw <= static_cast<double>(w - 1);
    push([map, pos, out, r0, c0, r1, c1, fr, fc, c, r_inside, c_inside] {
        if (!out->grad_live()) return;
        const double w00 = (1.0 - fr) * (1.0 - fc), w01 = (1.0 - fr) * fc;
        const double w10 = fr * (1.0 - fc), w11 = fr * fc;
        if (map->grad_live()) {
            map->ensure_grad();
            const int wdim = map->dim(1), cdim = map->dim(2);
            auto gat = [&](int i, int j, int ch) -> double& {
                return map->grad[(static_cast<std::size_t>(i) * wdim + j) * cdim + ch];
            };
            for (int ch = 0; ch < c; ++ch) {
                const double g = out->grad[ch];
                gat(r0, c0, ch) += w00 * g;
                gat(r0, c1, ch) += w01 * g;
                gat(r1, c0, ch) += w10 * g;
                gat(r1, c1, ch) += w11 * g;
            }
        }
        if (pos->grad_live()) {
            pos->ensure_grad();
            double dr = 0.0, dc = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const double g = out->grad[ch];
                const double v00 = map->at(r0, c0, ch), v01 = map->at(r0, c1, ch);
                const double v10 = map->at(r1, c0, ch), v11 = map->at(r1, c1, ch);
                dr += g * ((1.0 - fc) * (v10 - v00) + fc * (v11 - v01));
                dc += g * ((1.0 - fr) * (v01 - v00) + fr * (v11 - v10));
            }
            if (r_inside) pos->grad[0] += dr;
            if (c_inside) pos->grad[1] += dc;
        }
    });
    return out;
}

TensorPtr Tape::index_select(const TensorPtr& a, std::vector<int> indices) {
    if (a->ndim() != 1 && a->ndim() != 2) throw ShapeError("index_select: expected 1-d or 2-d");
    const int cols = a->ndim() == 2 ? a->dim(1) : 1;
    const int rows = a->dim(0);
    for (int idx : indices) {
        if (idx < 0 || idx >= rows) throw ShapeError("index_select: index out of range");
    }
    std::vector<int> out_shape =
        a->ndim() == 2 ? std::vector<int>{static_cast<int>(indices.size()), cols}
                       : std::vector<int>{static_cast<int>(indices.size())};
    auto out = make_output(out_shape, {&a});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = a->data.data() + static_cast<std::size_t>(indices[i]) * cols;
        std::copy(src, src + cols, out->data.data() + i * cols);
    }
    push([a, out, indices = std::move(indices), cols] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < indices.size(); ++i) {
            double* dst = a->grad.data() + static_cast<std::size_t>(indices[i]) * cols;
            const double* g = out->grad.data() + i * cols;
            for (int j = 0; j < cols; ++j) dst[j] += g[j];
        }
    });
    return out;
}

TensorPtr Tape::row(const TensorPtr& a, int i) {
    if (a->ndim() != 2) throw ShapeError("row: expected 2-d tensor");
    if (i < 0 || i >= a->dim(0)) throw ShapeError("row: index out of range");
    const int n = a->dim(1);
    auto out = make_output({n}, {&a});
    std::copy(a->data.begin() + static_cast<std::size_t>(i) * n,
              a->data.begin() + static_cast<std::size_t>(i + 1) * n, out->data.begin());
    push([a, out, i, n] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (int j = 0; j < n; ++j) a->grad[static_cast<std::size_t>(i) * n + j] += out->grad[j];
    });
    return out;
}

TensorPtr Tape::col(const TensorPtr& a, int j) {
    if (a->ndim() != 2) throw ShapeError("col: expected 2-d tensor");
    if (j < 0 || j >= a->dim(1)) throw ShapeError("col: index out of range");
    const int m = a->dim(0), n = a->dim(1);
    auto out = make_output({m}, {&a});
    for (int i = 0; i < m; ++i) out->data[i] = a->data[static_cast<std::size_t>(i) * n + j];
    push([a, out, j, m, n] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (int i = 0; i < m; ++i) a->grad[static_cast<std::size_t>(i) * n + j] += out->grad[i];
    });
    return out;
}

TensorPtr Tape::rows(const TensorPtr& a, int r0, int r1) {
    if (a->ndim() != 2) throw ShapeError("rows: expected 2-d tensor");
    if (r0 < 0 || r1 > a->dim(0) || r0 >= r1) throw ShapeError("rows: bad range");
    const int n = a->dim(1);
    auto out = make_output({r1 - r0, n}, {&a});
    std::copy(a->data.begin() + static_cast<std::size_t>(r0) * n,
              a->data.begin() + static_cast<std::size_t>(r1) * n, out->data.begin());
    push([a, out, r0, n] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        const std::size_t count = out->size();
        double* dst = a->grad.data() + static_cast<std::size_t>(r0) * n;
        for (std::size_t i = 0; i < count; ++i) dst[i] += out->grad[i];
    });
    return out;
}

TensorPtr Tape::concat(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    int total = 0;
    bool live = false;
    for (const auto& p : parts) {
        if (p->ndim() != 1) throw ShapeError("concat: expected 1-d parts");
        total += p->dim(0);
        live = live || p->grad_live();
    }
    auto out = tensor({total});
    out->node_output_live_ = live;
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
        off += p->size();
    }
    push([parts, out] {
        if (!out->grad_live()) return;
        std::size_t off = 0;
        for (const auto& p : parts) {
            if (p->grad_live()) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] += out->grad[off + i];
            }
            off += p->size();
        }
    });
    return out;
}

TensorPtr Tape::vstack(const std::vector<TensorPtr>& blocks) {
    if (blocks.empty()) throw ShapeError("vstack: no blocks");
    const int n = blocks.front()->ndim() == 2 ? blocks.front()->dim(1) : blocks.front()->dim(0);
    int total_rows = 0;
    bool live = false;
    for (const auto& b : blocks) {
        const int bn = b->ndim() == 2 ? b->dim(1) : b->dim(0);
        if (b->ndim() > 2 || bn != n) throw ShapeError("vstack: column mismatch");
        total_rows += b->ndim() == 2 ? b->dim(0) : 1;
        live = live || b->grad_live();
    }
    auto out = tensor({total_rows, n});
    out->node_output_live_ = live;
    std::size_t off = 0;
    for (const auto& b : blocks) {
        std::copy(b->data.begin(), b->data.end(), out->data.begin() + off);
        off += b->size();
    }
    push([blocks, out] {
        if (!out->grad_live()) return;
        std::size_t off = 0;
        for (const auto& b : blocks) {
            if (b->grad_live()) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[off + i];
            }
            off += b->size();
        }
    });
    return out;
}

TensorPtr Tape::row_scale(const TensorPtr& a, const TensorPtr& s) {
    if (a->ndim() != 2 || s->ndim() != 1 || s->dim(0) != a->dim(0)) {
        throw ShapeError("row_scale: need a [m x n] and s [m]");
    }
    const int m = a->dim(0), n = a->dim(1);
    auto out = make_output(a->shape, {&a, &s});
    for (int i = 0; i < m; ++i) {
        const double sv = s->data[i];
        for (int j = 0; j < n; ++j) out->data[i * n + j] = sv * a->data[i * n + j];
    }
    push([a, s, out, m, n] {
        if (!out->grad_live()) return;
        if (a->grad_live()) {
            a->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const double sv = s->data[i];
                for (int j = 0; j < n; ++j) a->grad[i * n + j] += sv * out->grad[i * n + j];
            }
        }
        if (s->grad_live()) {
            s->ensure_grad();
            for (int i = 0; i < m; ++i) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += out->grad[i * n + j] * a->data[i * n + j];
                s->grad[i] += acc;
            }
        }
    });
    return out;
}

TensorPtr Tape::col_sum(const TensorPtr& a) {
    if (a->ndim() != 2) throw ShapeError("col_sum: expected 2-d tensor");
    const int m = a->dim(0), n = a->dim(1);
    auto out = make_output({n}, {&a});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->data[j] += a->data[i * n + j];
    push([a, out, m, n] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[j];
    });
    return out;
}

TensorPtr Tape::sum(const TensorPtr& a) {
    auto out = make_output({1}, {&a});
    double acc = 0.0;
    for (double v : a->data) acc += v;
    out->data[0] = acc;
    push([a, out] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        const double g = out->grad[0];
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
    });
    return out;
}

TensorPtr Tape::dropout(const TensorPtr& a, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0, 1)");
    if (!training || p == 0.0) return a;
    auto mask = std::make_shared<std::vector<double>>(a->size());
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < a->size(); ++i)
        (*mask)[i] = rng.uniform() >= p ? keep_scale : 0.0;
    auto out = make_output(a->shape, {&a});
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * (*mask)[i];
    push([a, out, mask] {
        if (!out->grad_live() || !a->grad_live()) return;
        a->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * (*mask)[i];
    });
    return out;
}

void Tape::backward(const TensorPtr& loss) {
    if (loss->size() != 1) throw ContractError("backward: loss must be scalar");
    if (backward_done_) throw ContractError("backward: tape already replayed; build a new tape");
    backward_done_ = true;
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
    if (!(h > 0.0)) throw ContractError("finite_diff_grad: h must be positive");
    Tensor g(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = probe.data[i];
        probe.data[i] = saved + h;
        const double fp = f(probe);
        probe.data[i] = saved - h;
        const double fm = f(probe);
        probe.data[i] = saved;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace dla::numeric
