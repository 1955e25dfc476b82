#pragma once

// Loss functions for the second-stage M-estimator.
//
// A LossSpec bundles rho, its (sub)derivative psi and, where it exists
// classically, psi'. Built-in losses dispatch through a switch so the hot
// objective loop avoids std::function; registered custom losses go
// through the stored callables.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "tobitm/error.hpp"

namespace tobitm {

using LossParams = std::map<std::string, double>;

enum class LossKind { clad, wme, log_cosh, custom };

struct LossSpec {
    std::string name;
    LossParams params;
    LossKind kind = LossKind::custom;
    std::function<double(double)> rho_fn;
    std::function<double(double)> psi_fn;
    std::function<double(double)> psi_prime_fn;  // empty when !smooth
    double lipschitz_k = 1.0;
    double psi_bound = 1.0;
    bool smooth = false;

    double rho(double x) const {
        switch (kind) {
        case LossKind::clad:
            return std::abs(x);
        case LossKind::wme: {
            const double d = huber_d_;
            const double a = std::abs(x);
            return a <= d ? 0.5 * x * x : d * (a - 0.5 * d);
        }
        case LossKind::log_cosh: {
            // log cosh x = |x| + log(1 + e^{-2|x|}) - log 2, finite for any x.
            const double a = std::abs(x);
            return a + (std::log1p(std::exp(-2.0 * a)) - std::log1p(1.0));
        }
        case LossKind::custom:
            break;
        }
        return rho_fn(x);
    }

    double psi(double x) const {
        switch (kind) {
        case LossKind::clad:
            return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        case LossKind::wme:
            return std::clamp(x, -huber_d_, huber_d_);
        case LossKind::log_cosh:
            return std::tanh(x);
        case LossKind::custom:
            break;
        }
        return psi_fn(x);
    }

    // Classical second derivative; only meaningful when smooth is true.
    double psi_prime(double x) const {
        switch (kind) {
        case LossKind::clad:
            return 0.0;
        case LossKind::wme:
            return std::abs(x) < huber_d_ ? 1.0 : 0.0;
        case LossKind::log_cosh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case LossKind::custom:
            break;
        }
        if (!psi_prime_fn) throw invalid_input("loss-functions", "loss '" + name + "' has no classical psi'");
        return psi_prime_fn(x);
    }

    // "clad", "wme:d=1.35", "logcosh", "name:a=1,b=2"
    std::string label() const {
        std::string s = name;
        char sep = ':';
        for (const auto& [key, value] : params) {
            char buf[64];
            const auto res = std::to_chars(buf, buf + sizeof buf, value);  // shortest round-trip form
            s += sep;
            s += key + "=" + std::string(buf, res.ptr);
            sep = ',';
        }
        return s;
    }

private:
    double huber_d_ = 1.35;

    friend LossSpec wme(double d);
};

inline LossSpec clad() {
    LossSpec s;
    s.name = "clad";
    s.kind = LossKind::clad;
    s.lipschitz_k = 1.0;
    s.psi_bound = 1.0;
    s.smooth = false;
    return s;
}

inline constexpr double kDefaultHuberD = 1.35;

inline LossSpec wme(double d = kDefaultHuberD) {
    if (!(d > 0.0) || !std::isfinite(d))
        throw invalid_input("loss-functions", "wme tuning constant d must be positive and finite");
    LossSpec s;
    s.name = "wme";
    s.params["d"] = d;
    s.kind = LossKind::wme;
    s.huber_d_ = d;
    s.lipschitz_k = d;
    s.psi_bound = d;
    s.smooth = true;
    return s;
}

inline LossSpec log_cosh() {
    LossSpec s;
    s.name = "logcosh";
    s.kind = LossKind::log_cosh;
    s.lipschitz_k = 1.0;
    s.psi_bound = 1.0;
    s.smooth = true;
    return s;
}

// x -> (psi(x+h) - psi(x-h)) / 2h
inline std::function<double(double)> smoothed_psi_prime(const LossSpec& loss, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw invalid_input("loss-functions", "bandwidth h must be positive");
    return [loss, h](double x) { return (loss.psi(x + h) - loss.psi(x - h)) / (2.0 * h); };
}

// Sampled check of the structural assumptions on a loss: rho(0) = 0, even,
// nonnegative, k-Lipschitz and |psi| bounded. Returns human-readable
// violations; empty means the loss passed.
inline std::vector<std::string> check_loss_invariants(const LossSpec& loss) {
    std::vector<std::string> bad;
    auto report = [&](const std::string& what, double x) {
        if (bad.size() < 8) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s at x=%.6g", what.c_str(), x);
            bad.emplace_back(buf);
        }
    };
    if (!(loss.lipschitz_k > 0.0) || !std::isfinite(loss.lipschitz_k)) bad.emplace_back("lipschitz_k must be positive");
    if (!(loss.psi_bound > 0.0) || !std::isfinite(loss.psi_bound)) bad.emplace_back("psi_bound must be positive");
    if (!bad.empty()) return bad;

    if (std::abs(loss.rho(0.0)) > 1e-12) report("rho(0) != 0", 0.0);

    constexpr int kGrid = 10000;
    std::vector<double> xs;
    xs.reserve(kGrid + 8);
    for (int i = 0; i < kGrid; ++i) xs.push_back(-50.0 + 100.0 * i / (kGrid - 1));
    for (double far : {1e2, 1e3, 1e4, 1e6}) {
        xs.push_back(far);
        xs.push_back(-far);
    }

    const double k = loss.lipschitz_k;
    double prev_x = 0.0, prev_rho = 0.0;
    bool have_prev = false;
    for (double x : xs) {
        const double r = loss.rho(x);
        const double rm = loss.rho(-x);
        const double p = loss.psi(x);
        if (!std::isfinite(r) || !std::isfinite(p)) {
            report("non-finite rho/psi", x);
            continue;
        }
        if (r < 0.0) report("rho < 0", x);
        if (std::abs(r - rm) > 1e-12 * std::max(1.0, std::abs(r))) report("rho not even", x);
        if (std::abs(p) > loss.psi_bound * (1.0 + 1e-12)) report("|psi| exceeds psi_bound", x);
        // Lipschitz against the origin catches superlinear growth in the far field.
        if (std::abs(r - loss.rho(0.0)) > k * std::abs(x) * (1.0 + 1e-9) + 1e-12) report("Lipschitz bound violated", x);
        if (have_prev && std::abs(x - prev_x) < 1.0 &&
            std::abs(r - prev_rho) > k * std::abs(x - prev_x) * (1.0 + 1e-9) + 1e-12)
            report("Lipschitz bound violated", x);
        prev_x = x;
        prev_rho = r;
        have_prev = true;
    }
    return bad;
}

// Parses "name" or "name:key=value,key=value".
inline std::pair<std::string, LossParams> parse_loss_label(const std::string& text) {
    static const std::string mod = "loss-functions";
    const auto colon = text.find(':');
    std::string name = text.substr(0, colon);
    if (name.empty()) throw invalid_input(mod, "empty loss name");
    LossParams params;
    if (colon == std::string::npos) return {name, params};
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
        const auto comma = rest.find(',', pos);
        const std::string item = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw invalid_input(mod, "malformed loss parameter '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string val = item.substr(eq + 1);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(val, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != val.size()) throw invalid_input(mod, "loss parameter '" + key + "' is not a number");
        params[key] = v;
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return {name, params};
}

// Name -> factory map. Every loss produced by a factory is checked
// against the sampled invariants; registration checks the defaults.
class LossRegistry {
public:
    using Factory = std::function<LossSpec(const LossParams&)>;

    LossRegistry() {
        factories_["clad"] = [](const LossParams& p) {
            reject_unknown("clad", p, {});
            return clad();
        };
        factories_["wme"] = [](const LossParams& p) {
            reject_unknown("wme", p, {"d"});
            const auto it = p.find("d");
            return wme(it == p.end() ? kDefaultHuberD : it->second);
        };
        factories_["logcosh"] = [](const LossParams& p) {
            reject_unknown("logcosh", p, {});
            return log_cosh();
        };
    }

    void add(const std::string& name, Factory factory) {
        if (name.empty() || name.find(':') != std::string::npos)
            throw invalid_input("loss-functions", "invalid loss name '" + name + "'");
        validate(factory({}));
        std::lock_guard lock(mu_);
        factories_[name] = std::move(factory);
    }

    LossSpec make(const std::string& name, const LossParams& params = {}) const {
        Factory f;
        {
            std::lock_guard lock(mu_);
            const auto it = factories_.find(name);
            if (it == factories_.end()) throw invalid_input("loss-functions", "unknown loss '" + name + "'");
            f = it->second;
        }
        LossSpec spec = f(params);
        if (spec.kind == LossKind::custom) validate(spec);
        return spec;
    }

    LossSpec parse(const std::string& label) const {
        auto [name, params] = parse_loss_label(label);
        return make(name, params);
    }

    std::vector<std::string> names() const {
        std::lock_guard lock(mu_);
        std::vector<std::string> out;
        for (const auto& kv : factories_) out.push_back(kv.first);
        return out;
    }

private:
    static void validate(const LossSpec& spec) {
        if (spec.kind == LossKind::custom && (!spec.rho_fn || !spec.psi_fn))
            throw invalid_input("loss-functions", "custom loss '" + spec.name + "' must provide rho and psi");
        if (spec.smooth && spec.kind == LossKind::custom && !spec.psi_prime_fn)
            throw invalid_input("loss-functions", "smooth loss '" + spec.name + "' must provide psi'");
        const auto bad = check_loss_invariants(spec);
        if (!bad.empty()) {
            std::string msg = "loss '" + spec.name + "' rejected:";
            for (const auto& b : bad) msg += " [" + b + "]";
            throw invalid_input("loss-functions", msg);
        }
    }

    static void reject_unknown(const std::string& name, const LossParams& p, std::initializer_list<const char*> allowed) {
        for (const auto& kv : p) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || kv.first == a;
            if (!ok) throw invalid_input("loss-functions", "loss '" + name + "' has no parameter '" + kv.first + "'");
        }
    }

    mutable std::mutex mu_;
    std::map<std::string, Factory> factories_;
};

inline LossRegistry& default_loss_registry() {
    static LossRegistry registry;
    return registry;
}

}  // namespace tobitm
