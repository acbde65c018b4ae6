#include "gradleak/optimizers.hpp"

#include <cmath>
#include <limits>

namespace gradleak {

std::vector<double> flatten_tensors(const std::vector<Tensor>& ts) {
    std::vector<double> out;
    size_t n = 0;
    for (const auto& t : ts) n += static_cast<size_t>(t.numel());
    out.reserve(n);
    for (const auto& t : ts) {
        auto d = t.data();
        out.insert(out.end(), d.begin(), d.end());
    }
    return out;
}

std::vector<Tensor> unflatten_like(const std::vector<double>& flat,
                                   const std::vector<Tensor>& like) {
    std::vector<Tensor> out;
    out.reserve(like.size());
    size_t pos = 0;
    for (const auto& t : like) {
        size_t n = static_cast<size_t>(t.numel());
        out.push_back(Tensor::from_data(
            t.shape(), std::vector<double>(flat.begin() + static_cast<ptrdiff_t>(pos),
                                           flat.begin() + static_cast<ptrdiff_t>(pos + n))));
        pos += n;
    }
    if (pos != flat.size()) throw Error("unflatten: size mismatch");
    return out;
}

void AdamW::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.size()) throw Error("adamw: params/grads arity mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
            v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        auto g = grads[i].data();
        if (p.size() != g.size()) throw Error("adamw: gradient shape mismatch");
        std::vector<double> updated(p.size());
        for (size_t j = 0; j < p.size(); ++j) {
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            double m_hat = m_[i][j] / bc1;
            double v_hat = v_[i][j] / bc2;
            updated[j] =
                p[j] - cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * p[j]);
        }
        params[i] = Tensor::from_data(params[i].shape(), std::move(updated));
    }
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l1_norm(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += std::fabs(v);
    return s;
}

}  // namespace

std::vector<double> LbfgsLite::search_direction(const std::vector<double>& g) const {
    std::vector<double> q = g;
    size_t m = s_hist_.size();
    std::vector<double> alpha(m), rho(m);
    for (size_t i = m; i-- > 0;) {
        rho[i] = 1.0 / dot(y_hist_[i], s_hist_[i]);
        alpha[i] = rho[i] * dot(s_hist_[i], q);
        for (size_t j = 0; j < q.size(); ++j) q[j] -= alpha[i] * y_hist_[i][j];
    }
    double gamma = dot(s_hist_.back(), y_hist_.back()) / dot(y_hist_.back(), y_hist_.back());
    for (double& v : q) v *= gamma;
    for (size_t i = 0; i < m; ++i) {
        double beta = rho[i] * dot(y_hist_[i], q);
        for (size_t j = 0; j < q.size(); ++j) q[j] += (alpha[i] - beta) * s_hist_[i][j];
    }
    for (double& v : q) v = -v;
    return q;
}

LbfgsLite::StepResult LbfgsLite::step(std::vector<Tensor>& params, const LossClosure& closure,
                                      double f0, const std::vector<Tensor>& g0) {
    StepResult res;
    std::vector<double> x = flatten_tensors(params);
    std::vector<double> g = flatten_tensors(g0);

    if (has_prev_) {
        std::vector<double> s(x.size()), yv(x.size());
        double sn = 0.0, yn = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            s[i] = x[i] - prev_x_[i];
            yv[i] = g[i] - prev_g_[i];
            sn += s[i] * s[i];
            yn += yv[i] * yv[i];
        }
        double sy = dot(s, yv);
        if (sy > 1e-10 * std::sqrt(sn) * std::sqrt(yn) && sy > 0.0) {
            s_hist_.push_back(std::move(s));
            y_hist_.push_back(std::move(yv));
            while (static_cast<int>(s_hist_.size()) > cfg_.history) {
                s_hist_.pop_front();
                y_hist_.pop_front();
            }
        }
    }

    std::vector<double> dir;
    double t0;
    if (s_hist_.empty()) {
        dir = g;
        for (double& v : dir) v = -v;
        t0 = std::min(1.0, 1.0 / std::max(l1_norm(g), 1e-300)) * cfg_.lr;
    } else {
        dir = search_direction(g);
        t0 = cfg_.lr;
    }
    double slope = dot(dir, g);
    if (slope >= 0.0) {
        s_hist_.clear();
        y_hist_.clear();
        dir = g;
        for (double& v : dir) v = -v;
        slope = -dot(g, g);
        t0 = std::min(1.0, 1.0 / std::max(l1_norm(g), 1e-300)) * cfg_.lr;
    }

    double t = t0;
    bool accepted = false;
    double f_try = f0;
    std::vector<double> x_try(x.size());
    for (int h = 0; h <= cfg_.max_halvings; ++h) {
        for (size_t i = 0; i < x.size(); ++i) x_try[i] = x[i] + t * dir[i];
        try {
            f_try = closure(unflatten_like(x_try, params), nullptr);
        } catch (const NonFiniteError&) {
            // wild trial point; treat as rejected and shorten the step
            f_try = std::numeric_limits<double>::infinity();
        }
        ++res.evals;
        if (f_try <= f0 + cfg_.armijo_c * t * slope) {
            accepted = true;
            break;
        }
        t *= 0.5;
    }

    if (accepted) {
        params = unflatten_like(x_try, params);
        res.accepted_loss = f_try;
    } else {
        // stall: fall back to a small gradient step and forget the history
        res.line_search_failed = true;
        s_hist_.clear();
        y_hist_.clear();
        double step = cfg_.lr * 1e-3 / std::max(1.0, std::sqrt(dot(g, g)));
        for (size_t i = 0; i < x.size(); ++i) x_try[i] = x[i] - step * g[i];
        params = unflatten_like(x_try, params);
        res.accepted_loss = f0;
    }

    prev_x_ = std::move(x);
    prev_g_ = std::move(g);
    has_prev_ = true;
    return res;
}

}  // namespace gradleak
