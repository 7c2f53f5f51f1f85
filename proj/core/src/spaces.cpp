#include "mfgdelay/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace mfgdelay {

namespace {

std::uint64_t checked_pow(std::uint64_t base, int exp, std::uint64_t cap, const char* what) {
    std::uint64_t r = 1;
    for (int k = 0; k < exp; ++k) {
        if (base != 0 && r > cap / base) {
            std::ostringstream msg;
            msg << "window space too large: " << what << " = " << base << "^" << exp << " exceeds cap " << cap;
            throw ConfigError(msg.str());
        }
        r *= base;
    }
    return r;
}

}  // namespace

SpaceIndex::SpaceIndex(const ModelSpec& model, std::size_t window_cap)
    : n_x_(model.n_x()), n_a_(model.n_a()), d_min_(model.d_min()), d_max_(model.d_max()), delays_(model.delays) {
    const int d0 = d_max_;
    const std::uint64_t cap = window_cap;
    pow_x_.resize(static_cast<std::size_t>(d0 + 3));
    pow_a_.resize(static_cast<std::size_t>(d0 + 2));
    // Powers beyond the cap are never used as codes; saturate them.
    for (std::size_t k = 0; k < pow_x_.size(); ++k)
        pow_x_[k] = k == 0 ? 1 : std::min<std::uint64_t>(pow_x_[k - 1] * static_cast<std::uint64_t>(n_x_), UINT64_MAX / 4);
    for (std::size_t k = 0; k < pow_a_.size(); ++k)
        pow_a_[k] = k == 0 ? 1 : std::min<std::uint64_t>(pow_a_[k - 1] * static_cast<std::uint64_t>(n_a_), UINT64_MAX / 4);

    const std::uint64_t a_hist = checked_pow(static_cast<std::uint64_t>(n_a_), d0, cap, "actions^d0");
    for (int d = d_min_; d <= d0; ++d) {
        const std::uint64_t xs = checked_pow(static_cast<std::uint64_t>(n_x_), d0 - d + 1, cap, "states^(d0-d+1)");
        if (xs > cap / a_hist) {
            std::ostringstream msg;
            msg << "window space too large: block d=" << d << " has states^" << (d0 - d + 1) << " * actions^" << d0
                << " entries, above cap " << cap;
            throw ConfigError(msg.str());
        }
        const std::uint64_t wl = xs * a_hist;
        const std::uint64_t yl = static_cast<std::uint64_t>(n_x_) * pow_a_[static_cast<std::size_t>(d)];
        y_off_.push_back(y_size_);
        y_len_.push_back(yl);
        y_size_ += yl;
        w_off_.push_back(w_size_);
        w_len_.push_back(wl);
        if (w_size_ + wl > cap) {
            std::ostringstream msg;
            msg << "window space too large: " << (w_size_ + wl) << " windows above cap " << cap
                << " (delay range " << d_min_ << ".." << d0 << ")";
            throw ConfigError(msg.str());
        }
        w_size_ += wl;
    }
}

std::size_t SpaceIndex::block(int d) const {
    if (d < d_min_ || d > d_max_) throw std::out_of_range("delay " + std::to_string(d) + " outside the delay range");
    return static_cast<std::size_t>(d - d_min_);
}

std::size_t SpaceIndex::encode(const AugmentedState& y) const {
    if (y.x < 0 || y.x >= n_x_) throw std::out_of_range("observable state label out of range");
    if (static_cast<int>(y.tail.size()) != y.d) throw std::invalid_argument("tail length must equal the delay");
    std::uint64_t code = 0;
    for (int a : y.tail) {
        if (a < 0 || a >= n_a_) throw std::out_of_range("tail action out of range");
        code = code * static_cast<std::uint64_t>(n_a_) + static_cast<std::uint64_t>(a);
    }
    return y_index(y.d, y.x, code);
}

std::size_t SpaceIndex::encode(const ExtendedWindow& w) const {
    if (static_cast<int>(w.x_window.size()) != d_max_ - w.d + 1)
        throw std::invalid_argument("x_window length must equal d0 - d + 1");
    if (static_cast<int>(w.a_window.size()) != d_max_) throw std::invalid_argument("a_window length must equal d0");
    std::uint64_t xc = 0;
    for (int x : w.x_window) {
        if (x < 0 || x >= n_x_) throw std::out_of_range("window state out of range");
        xc = xc * static_cast<std::uint64_t>(n_x_) + static_cast<std::uint64_t>(x);
    }
    std::uint64_t ac = 0;
    for (int a : w.a_window) {
        if (a < 0 || a >= n_a_) throw std::out_of_range("window action out of range");
        ac = ac * static_cast<std::uint64_t>(n_a_) + static_cast<std::uint64_t>(a);
    }
    return w_index(w.d, xc, ac);
}

AugmentedState SpaceIndex::decode_y(std::size_t y) const {
    AugmentedState s;
    s.d = y_delay(y);
    s.x = y_state(y);
    s.tail.resize(static_cast<std::size_t>(s.d));
    for (int lag = s.d; lag >= 1; --lag) s.tail[static_cast<std::size_t>(s.d - lag)] = y_action(y, lag);
    return s;
}

ExtendedWindow SpaceIndex::decode_window(std::size_t w) const {
    ExtendedWindow e;
    e.d = w_delay(w);
    for (int lag = d_max_; lag >= e.d; --lag) e.x_window.push_back(w_state(w, lag));
    for (int lag = d_max_; lag >= 1; --lag) e.a_window.push_back(w_action(w, lag));
    return e;
}

int SpaceIndex::y_delay(std::size_t y) const {
    if (y >= y_size_) throw std::out_of_range("observable index out of range");
    const auto it = std::upper_bound(y_off_.begin(), y_off_.end(), y);
    return d_min_ + static_cast<int>(it - y_off_.begin()) - 1;
}

int SpaceIndex::y_state(std::size_t y) const {
    const int d = y_delay(y);
    return static_cast<int>((y - y_off_[block(d)]) / pow_a_[static_cast<std::size_t>(d)]);
}

std::uint64_t SpaceIndex::y_tail_code(std::size_t y) const {
    const int d = y_delay(y);
    return (y - y_off_[block(d)]) % pow_a_[static_cast<std::size_t>(d)];
}

int SpaceIndex::y_action(std::size_t y, int lag) const {
    return static_cast<int>((y_tail_code(y) / pow_a_[static_cast<std::size_t>(lag - 1)]) % static_cast<std::uint64_t>(n_a_));
}

std::size_t SpaceIndex::y_index(int d, int x, std::uint64_t tail_code) const {
    return y_off_[block(d)] + static_cast<std::size_t>(x) * pow_a_[static_cast<std::size_t>(d)] + tail_code;
}

int SpaceIndex::w_delay(std::size_t w) const {
    if (w >= w_size_) throw std::out_of_range("window index out of range");
    const auto it = std::upper_bound(w_off_.begin(), w_off_.end(), w);
    return d_min_ + static_cast<int>(it - w_off_.begin()) - 1;
}

std::uint64_t SpaceIndex::w_state_code(std::size_t w) const {
    const int d = w_delay(w);
    return (w - w_off_[block(d)]) / pow_a_[static_cast<std::size_t>(d_max_)];
}

std::uint64_t SpaceIndex::w_action_code(std::size_t w) const {
    const int d = w_delay(w);
    return (w - w_off_[block(d)]) % pow_a_[static_cast<std::size_t>(d_max_)];
}

int SpaceIndex::w_state(std::size_t w, int lag) const {
    const int d = w_delay(w);
    return static_cast<int>((w_state_code(w) / pow_x_[static_cast<std::size_t>(lag - d)]) % static_cast<std::uint64_t>(n_x_));
}

int SpaceIndex::w_action(std::size_t w, int lag) const {
    return static_cast<int>((w_action_code(w) / pow_a_[static_cast<std::size_t>(lag - 1)]) % static_cast<std::uint64_t>(n_a_));
}

std::size_t SpaceIndex::w_index(int d, std::uint64_t state_code, std::uint64_t action_code) const {
    return w_off_[block(d)] + state_code * pow_a_[static_cast<std::size_t>(d_max_)] + action_code;
}

std::size_t SpaceIndex::project(std::size_t w) const {
    const int d = w_delay(w);
    const std::size_t local = w - w_off_[block(d)];
    const std::uint64_t xc = local / pow_a_[static_cast<std::size_t>(d_max_)];
    const std::uint64_t ac = local % pow_a_[static_cast<std::size_t>(d_max_)];
    const int x = static_cast<int>(xc % static_cast<std::uint64_t>(n_x_));
    return y_index(d, x, ac % pow_a_[static_cast<std::size_t>(d)]);
}

SpaceIndex build_spaces(const ModelSpec& model, std::size_t window_cap) { return SpaceIndex(model, window_cap); }

int next_delay(const ModelSpec& model, int d, int i) {
    const int di = model.delays[static_cast<std::size_t>(i)];
    return di <= d ? di : d + 1;
}

namespace {

int next_delay(const SpaceIndex& s, int d, int i) {
    const int di = s.delays()[static_cast<std::size_t>(i)];
    return di <= d ? di : d + 1;
}

}  // namespace

KernelTables::KernelTables(const ModelSpec& model, std::span<const MeasureVector> lag_measures)
    : n_x_(model.n_x()), n_a_(model.n_a()) {
    rows_.resize(lag_measures.size());
    for (std::size_t k = 0; k < lag_measures.size(); ++k) {
        const auto& mu = lag_measures[k];
        if (mu.empty()) continue;
        check_measure(model, mu);
        auto& r = rows_[k];
        r.resize(static_cast<std::size_t>(n_x_ * n_a_ * n_x_));
        for (int x = 0; x < n_x_; ++x)
            for (int a = 0; a < n_a_; ++a)
                model.dynamics->kernel(x, a, mu,
                                       std::span<double>(r).subspan(static_cast<std::size_t>((x * n_a_ + a) * n_x_),
                                                                    static_cast<std::size_t>(n_x_)));
    }
}

bool KernelTables::has(int lag) const {
    return lag >= 0 && lag < static_cast<int>(rows_.size()) && !rows_[static_cast<std::size_t>(lag)].empty();
}

std::span<const double> KernelTables::row(int lag, int x, int a) const {
    if (!has(lag)) throw std::invalid_argument("missing lag measure at lag " + std::to_string(lag));
    return std::span<const double>(rows_[static_cast<std::size_t>(lag)])
        .subspan(static_cast<std::size_t>((x * n_a_ + a) * n_x_), static_cast<std::size_t>(n_x_));
}

void window_kernel(const SpaceIndex& s, std::size_t w, Control u, const KernelTables& tables, SparseDist& out) {
    const int d0 = s.d_max();
    const int d = s.w_delay(w);
    const int dn = next_delay(s, d, u.intervention);
    const std::uint64_t xc = s.w_state_code(w);
    const std::uint64_t ac = s.w_action_code(w);
    const std::uint64_t new_ac =
        d0 >= 1 ? (ac % s.pow_a(d0 - 1)) * static_cast<std::uint64_t>(s.n_a()) + static_cast<std::uint64_t>(u.action) : 0;
    const std::uint64_t kept = xc % s.pow_x(d0 - d);

    if (dn == d + 1) {
        out.push_back({s.w_index(dn, kept, new_ac), 1.0});
        return;
    }

    struct Leaf {
        std::uint64_t code;
        double prob;
        int state;
    };
    std::vector<Leaf> frontier{{0, 1.0, s.w_state(w, d)}};
    std::vector<Leaf> next;
    for (int lag = d; lag >= dn; --lag) {
        const int act = lag >= 1 ? s.w_action(w, lag) : u.action;
        next.clear();
        for (const auto& leaf : frontier) {
            const auto row = tables.row(lag, leaf.state, act);
            for (int xn = 0; xn < s.n_x(); ++xn) {
                const double p = row[static_cast<std::size_t>(xn)];
                if (p <= 0.0) continue;
                next.push_back({leaf.code * static_cast<std::uint64_t>(s.n_x()) + static_cast<std::uint64_t>(xn),
                                leaf.prob * p, xn});
            }
        }
        frontier.swap(next);
    }
    const std::uint64_t shift = s.pow_x(d - dn + 1);
    for (const auto& leaf : frontier) out.push_back({s.w_index(dn, kept * shift + leaf.code, new_ac), leaf.prob});
}

SparseDist window_kernel(const ModelSpec& model, const SpaceIndex& spaces, const ExtendedWindow& w, Control u,
                         std::span<const MeasureVector> lag_measures) {
    const KernelTables tables(model, lag_measures);
    SparseDist out;
    window_kernel(spaces, spaces.encode(w), u, tables, out);
    return out;
}

void augmented_kernel(const SpaceIndex& s, std::size_t y, Control u, const KernelTables& tables, SparseDist& out) {
    const int d = s.y_delay(y);
    const int x = s.y_state(y);
    const int dn = next_delay(s, d, u.intervention);
    const std::uint64_t full_tail =
        s.y_tail_code(y) * static_cast<std::uint64_t>(s.n_a()) + static_cast<std::uint64_t>(u.action);
    if (dn == d + 1) {
        out.push_back({s.y_index(dn, x, full_tail), 1.0});
        return;
    }
    const std::size_t nx = static_cast<std::size_t>(s.n_x());
    std::vector<double> cur(nx, 0.0), nxt(nx);
    cur[static_cast<std::size_t>(x)] = 1.0;
    for (int lag = d; lag >= dn; --lag) {
        const int act = lag >= 1 ? s.y_action(y, lag) : u.action;
        std::fill(nxt.begin(), nxt.end(), 0.0);
        for (std::size_t xs = 0; xs < nx; ++xs) {
            if (cur[xs] == 0.0) continue;
            const auto row = tables.row(lag, static_cast<int>(xs), act);
            for (std::size_t xn = 0; xn < nx; ++xn) nxt[xn] += cur[xs] * row[xn];
        }
        cur.swap(nxt);
    }
    const std::uint64_t tail = full_tail % s.pow_a(dn);
    for (std::size_t xn = 0; xn < nx; ++xn)
        if (cur[xn] > 0.0) out.push_back({s.y_index(dn, static_cast<int>(xn), tail), cur[xn]});
}

void current_state(const SpaceIndex& s, std::size_t y, const KernelTables& tables, std::span<double> out) {
    const int d = s.y_delay(y);
    const std::size_t nx = static_cast<std::size_t>(s.n_x());
    std::vector<double> cur(nx, 0.0), nxt(nx);
    cur[static_cast<std::size_t>(s.y_state(y))] = 1.0;
    for (int lag = d; lag >= 1; --lag) {
        const int act = s.y_action(y, lag);
        std::fill(nxt.begin(), nxt.end(), 0.0);
        for (std::size_t xs = 0; xs < nx; ++xs) {
            if (cur[xs] == 0.0) continue;
            const auto row = tables.row(lag, static_cast<int>(xs), act);
            for (std::size_t xn = 0; xn < nx; ++xn) nxt[xn] += cur[xs] * row[xn];
        }
        cur.swap(nxt);
    }
    std::copy(cur.begin(), cur.end(), out.begin());
}

std::vector<double> star(const ModelSpec& model, std::span<const double> nu, int m, std::span<const double> mu) {
    if (m < 1) throw std::invalid_argument("star requires at least one action coordinate");
    check_measure(model, mu);
    const std::size_t nx = static_cast<std::size_t>(model.n_x());
    const std::size_t na = static_cast<std::size_t>(model.n_a());
    std::size_t rest = 1;
    for (int k = 1; k < m; ++k) rest *= na;
    if (nu.size() != nx * na * rest) throw std::invalid_argument("star: measure size does not match X x A^m");
    std::vector<double> out(nx * rest, 0.0);
    std::vector<double> row(nx);
    for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t a = 0; a < na; ++a) {
            model.dynamics->kernel(static_cast<int>(x), static_cast<int>(a), mu, row);
            for (std::size_t r = 0; r < rest; ++r) {
                const double w = nu[(x * na + a) * rest + r];
                if (w == 0.0) continue;
                for (std::size_t xn = 0; xn < nx; ++xn) out[xn * rest + r] += w * row[xn];
            }
        }
    return out;
}

std::vector<char> support_table(const ModelSpec& model) {
    const int nx = model.n_x();
    const int na = model.n_a();
    const int dim = model.measure_dim();
    std::vector<MeasureVector> pts;
    for (int m = 0; m < dim; ++m) {
        MeasureVector v(static_cast<std::size_t>(dim), 0.0);
        v[static_cast<std::size_t>(m)] = 1.0;
        pts.push_back(std::move(v));
    }
    if (!model.dynamics->is_affine()) {
        std::mt19937_64 rng(0x5eedULL);
        std::exponential_distribution<double> expo(1.0);
        for (int k = 0; k < 1000; ++k) {
            MeasureVector v(static_cast<std::size_t>(dim));
            double z = 0.0;
            for (auto& e : v) z += (e = expo(rng));
            for (auto& e : v) e /= z;
            pts.push_back(std::move(v));
        }
    }
    std::vector<char> sup(static_cast<std::size_t>(nx * na * nx), 0);
    std::vector<double> row(static_cast<std::size_t>(nx));
    for (const auto& mu : pts)
        for (int x = 0; x < nx; ++x)
            for (int a = 0; a < na; ++a) {
                model.dynamics->kernel(x, a, mu, row);
                for (int xn = 0; xn < nx; ++xn)
                    if (row[static_cast<std::size_t>(xn)] > 0.0) sup[static_cast<std::size_t>((x * na + a) * nx + xn)] = 1;
            }
    return sup;
}

bool consistency_check(const SpaceIndex& s, const std::vector<char>& support, std::size_t w) {
    const int d = s.w_delay(w);
    for (int lag = s.d_max(); lag > d; --lag) {
        const int x = s.w_state(w, lag);
        const int a = s.w_action(w, lag);
        const int xn = s.w_state(w, lag - 1);
        if (!support[static_cast<std::size_t>((x * s.n_a() + a) * s.n_x() + xn)]) return false;
    }
    return true;
}

bool consistency_check(const ModelSpec& model, const SpaceIndex& spaces, const ExtendedWindow& w) {
    if (w.d < spaces.d_min() || w.d > spaces.d_max()) return false;
    if (static_cast<int>(w.x_window.size()) != spaces.d_max() - w.d + 1) return false;
    if (static_cast<int>(w.a_window.size()) != spaces.d_max()) return false;
    for (int x : w.x_window)
        if (x < 0 || x >= spaces.n_x()) return false;
    for (int a : w.a_window)
        if (a < 0 || a >= spaces.n_a()) return false;
    return consistency_check(spaces, support_table(model), spaces.encode(w));
}

}  // namespace mfgdelay
