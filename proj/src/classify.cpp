#include "thermaltap/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "thermaltap/rng.hpp"

namespace thermaltap::classify {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::string> sorted_classes(const std::vector<std::string>& labels) {
    std::set<std::string> s(labels.begin(), labels.end());
    return {s.begin(), s.end()};
}

std::vector<int> class_ids(const std::vector<std::string>& labels,
                           const std::vector<std::string>& classes) {
    std::vector<int> ids(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), labels[i]);
        ids[i] = static_cast<int>(it - classes.begin());
    }
    return ids;
}

double column_median(std::vector<double>& scratch) {
    if (scratch.empty()) return 0.0;
    const size_t mid = scratch.size() / 2;
    std::nth_element(scratch.begin(), scratch.begin() + mid, scratch.end());
    double hi = scratch[mid];
    if (scratch.size() % 2 == 1) return hi;
    const double lo = *std::max_element(scratch.begin(), scratch.begin() + mid);
    return lo + (hi - lo) / 2.0;
}

}  // namespace

double anova_f(const std::vector<double>& column, const std::vector<int>& group_ids,
               int group_count) {
    if (column.size() != group_ids.size()) throw ValueError("anova_f input length mismatch");
    if (group_count < 2) throw GroupError("ANOVA needs at least two groups");
    std::vector<double> sum(group_count, 0.0);
    std::vector<long> count(group_count, 0);
    for (size_t i = 0; i < column.size(); ++i) {
        sum[group_ids[i]] += column[i];
        count[group_ids[i]] += 1;
    }
    long total_n = 0;
    double total_sum = 0.0;
    for (int g = 0; g < group_count; ++g) {
        if (count[g] == 0) throw GroupError("ANOVA group " + std::to_string(g) + " is empty");
        total_n += count[g];
        total_sum += sum[g];
    }
    const double grand_mean = total_sum / total_n;
    double ssb = 0.0, ssw = 0.0;
    for (int g = 0; g < group_count; ++g) {
        const double gm = sum[g] / count[g];
        ssb += count[g] * (gm - grand_mean) * (gm - grand_mean);
    }
    for (size_t i = 0; i < column.size(); ++i) {
        const double d = column[i] - sum[group_ids[i]] / count[group_ids[i]];
        ssw += d * d;
    }
    if (ssb <= 0.0) return 0.0;
    const long df_w = total_n - group_count;
    if (df_w <= 0 || ssw <= 0.0) return std::numeric_limits<double>::infinity();
    const double msb = ssb / (group_count - 1);
    const double msw = ssw / df_w;
    return msb / msw;
}

PreprocessState fit_preprocess(const std::vector<std::vector<double>>& X,
                               const std::vector<std::string>& labels, int top_k) {
    if (X.empty()) throw PreprocessError("empty training matrix");
    if (X.size() != labels.size()) throw ValueError("labels do not match matrix rows");
    const size_t n = X.size();
    const size_t d = X[0].size();
    for (const auto& row : X) {
        if (row.size() != d) throw ShapeError("ragged training matrix");
    }

    PreprocessState s;
    s.input_width = static_cast<int>(d);
    s.medians.resize(d);
    s.keep.assign(d, 0);
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);

    std::vector<double> scratch;
    scratch.reserve(n);
    for (size_t j = 0; j < d; ++j) {
        scratch.clear();
        for (size_t i = 0; i < n; ++i) {
            if (!is_missing(X[i][j])) scratch.push_back(X[i][j]);
        }
        s.medians[j] = column_median(scratch);
    }

    // Raw-scale variance filter (the NETD threshold is physical), then
    // standardization stats from the same moments.
    std::vector<size_t> kept;
    for (size_t j = 0; j < d; ++j) {
        double sum = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double v = X[i][j];
            sum += is_missing(v) ? s.medians[j] : v;
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double v = X[i][j];
            const double dv = (is_missing(v) ? s.medians[j] : v) - mean;
            ss += dv * dv;
        }
        const double var = ss / n;
        s.mean[j] = mean;
        s.std[j] = std::sqrt(var);
        if (var >= kVarianceThreshold) {
            s.keep[j] = 1;
            kept.push_back(j);
        }
    }
    if (kept.empty()) throw PreprocessError("variance filter removed every feature");

    // ANOVA ranking over survivors (scale-invariant, so raw values serve).
    const auto classes = sorted_classes(labels);
    std::vector<double> f_scores(kept.size(), 0.0);
    if (classes.size() >= 2) {
        const auto ids = class_ids(labels, classes);
        std::vector<double> column(n);
        for (size_t kj = 0; kj < kept.size(); ++kj) {
            const size_t j = kept[kj];
            for (size_t i = 0; i < n; ++i) {
                const double v = X[i][j];
                column[i] = is_missing(v) ? s.medians[j] : v;
            }
            f_scores[kj] = anova_f(column, ids, static_cast<int>(classes.size()));
        }
    }

    const size_t k = std::min(static_cast<size_t>(std::max(1, top_k)), kept.size());
    std::vector<size_t> order(kept.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (f_scores[a] != f_scores[b]) return f_scores[a] > f_scores[b];
        return kept[a] < kept[b];
    });
    s.selected.reserve(k);
    for (size_t i = 0; i < k; ++i) s.selected.push_back(static_cast<int>(kept[order[i]]));
    std::sort(s.selected.begin(), s.selected.end());
    return s;
}

std::vector<double> apply_preprocess(const PreprocessState& s, const std::vector<double>& row) {
    if (row.size() != static_cast<size_t>(s.input_width)) {
        throw ShapeError("row width does not match fitted preprocess state");
    }
    std::vector<double> out;
    out.reserve(s.selected.size());
    for (int j : s.selected) {
        const double raw = is_missing(row[j]) ? s.medians[j] : row[j];
        const double sd = s.std[j] > 0.0 ? s.std[j] : 1.0;
        out.push_back((raw - s.mean[j]) / sd);
    }
    return out;
}

std::vector<std::vector<double>> apply_preprocess(const PreprocessState& s,
                                                  const std::vector<std::vector<double>>& X) {
    std::vector<std::vector<double>> out;
    out.reserve(X.size());
    for (const auto& row : X) out.push_back(apply_preprocess(s, row));
    return out;
}

// ---- Forest ----

namespace {

// Split finding runs on quantile-binned feature codes: exact midpoint
// candidates when a column has at most max_bins distinct values, mass-uniform
// quantile candidates beyond that. Thresholds stay in raw units so
// prediction never touches bins.
struct Binned {
    size_t n = 0, d = 0;
    std::vector<uint8_t> codes;              // n x d
    std::vector<std::vector<double>> cuts;   // per feature, ascending
};

std::vector<double> build_cuts(std::vector<double> sorted_col, int max_bins) {
    std::vector<double> cuts;
    const size_t n = sorted_col.size();
    auto midpoint = [](double lo, double hi) { return lo + (hi - lo) / 2.0; };
    if (n <= static_cast<size_t>(max_bins)) {
        for (size_t i = 1; i < n; ++i) {
            if (sorted_col[i - 1] < sorted_col[i]) {
                cuts.push_back(midpoint(sorted_col[i - 1], sorted_col[i]));
            }
        }
    } else {
        for (int b = 1; b < max_bins; ++b) {
            const size_t i = n * static_cast<size_t>(b) / static_cast<size_t>(max_bins);
            if (i > 0 && sorted_col[i - 1] < sorted_col[i]) {
                cuts.push_back(midpoint(sorted_col[i - 1], sorted_col[i]));
            }
        }
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    }
    return cuts;
}

Binned bin_data(const std::vector<std::vector<double>>& X, int max_bins) {
    Binned b;
    b.n = X.size();
    b.d = X[0].size();
    b.cuts.resize(b.d);
    b.codes.resize(b.n * b.d);
    std::vector<double> col(b.n);
    for (size_t j = 0; j < b.d; ++j) {
        for (size_t i = 0; i < b.n; ++i) col[i] = X[i][j];
        std::sort(col.begin(), col.end());
        b.cuts[j] = build_cuts(col, max_bins);
        for (size_t i = 0; i < b.n; ++i) {
            const auto& cuts = b.cuts[j];
            const size_t code = std::lower_bound(cuts.begin(), cuts.end(), X[i][j]) - cuts.begin();
            b.codes[i * b.d + j] = static_cast<uint8_t>(code);
        }
    }
    return b;
}

struct TreeBuilder {
    const Binned& data;
    const std::vector<int>& y;
    int num_classes;
    ForestParams params;
    int m_try;
    Rng& rng;
    std::vector<double>& split_gain;
    size_t root_size = 0;

    Tree tree;
    std::vector<int> feat_scratch;
    std::vector<long> hist;       // max_bins x classes
    std::vector<long> bin_total;  // max_bins
    std::vector<long> left_count, right_count;

    TreeBuilder(const Binned& data_, const std::vector<int>& y_, int num_classes_,
                const ForestParams& params_, Rng& rng_, std::vector<double>& gain)
        : data(data_), y(y_), num_classes(num_classes_), params(params_), rng(rng_),
          split_gain(gain) {
        m_try = params.features_per_split > 0
                    ? std::min<int>(params.features_per_split, static_cast<int>(data.d))
                    : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(data.d))));
        feat_scratch.resize(data.d);
        std::iota(feat_scratch.begin(), feat_scratch.end(), 0);
        hist.resize(static_cast<size_t>(params.max_bins) * num_classes);
        bin_total.resize(params.max_bins);
        left_count.resize(num_classes);
        right_count.resize(num_classes);
    }

    int make_leaf(const std::vector<long>& counts, long n) {
        const int offset = static_cast<int>(tree.leaf_dist.size());
        for (int c = 0; c < num_classes; ++c) {
            tree.leaf_dist.push_back(static_cast<double>(counts[c]) / n);
        }
        TreeNode node;
        node.leaf_offset = offset;
        tree.nodes.push_back(node);
        return static_cast<int>(tree.nodes.size()) - 1;
    }

    int build(std::vector<int>& samples, int depth) {
        const long n = static_cast<long>(samples.size());
        std::vector<long> counts(num_classes, 0);
        for (int s : samples) counts[y[s]] += 1;
        long top = 0, sum_sq = 0;
        for (long c : counts) {
            top = std::max(top, c);
            sum_sq += c * c;
        }
        if (depth >= params.max_depth || top == n || n < 2L * params.min_leaf) {
            return make_leaf(counts, n);
        }

        // random feature subset, evaluated in ascending index order so that
        // equal-impurity ties resolve to the lowest feature then threshold
        for (int k = 0; k < m_try; ++k) {
            const int j = k + static_cast<int>(rng.below(data.d - k));
            std::swap(feat_scratch[k], feat_scratch[j]);
        }
        std::sort(feat_scratch.begin(), feat_scratch.begin() + m_try);

        bool found = false;
        long best_num = 0, best_den = 1;
        int best_feature = -1, best_cut = -1;
        for (int fk = 0; fk < m_try; ++fk) {
            const int f = feat_scratch[fk];
            const auto& cuts = data.cuts[f];
            if (cuts.empty()) continue;
            const int bins = static_cast<int>(cuts.size()) + 1;
            std::fill(hist.begin(), hist.begin() + static_cast<size_t>(bins) * num_classes, 0);
            std::fill(bin_total.begin(), bin_total.begin() + bins, 0);
            for (int s : samples) {
                const int b = data.codes[static_cast<size_t>(s) * data.d + f];
                hist[static_cast<size_t>(b) * num_classes + y[s]] += 1;
                bin_total[b] += 1;
            }
            std::fill(left_count.begin(), left_count.end(), 0);
            long left_n = 0, left_sq = 0, right_sq = sum_sq;
            for (int b = 0; b + 1 < bins; ++b) {
                if (bin_total[b] > 0) {
                    for (int c = 0; c < num_classes; ++c) {
                        const long t = hist[static_cast<size_t>(b) * num_classes + c];
                        if (!t) continue;
                        left_sq += t * (2 * left_count[c] + t);
                        right_sq -= t * (2 * (counts[c] - left_count[c]) - t);
                        left_count[c] += t;
                    }
                    left_n += bin_total[b];
                } else {
                    continue;  // identical partition to the previous candidate
                }
                const long right_n = n - left_n;
                if (left_n < params.min_leaf || right_n < params.min_leaf) continue;
                // maximizing sum_sq_L/n_L + sum_sq_R/n_R minimizes weighted Gini
                const long num = left_sq * right_n + right_sq * left_n;
                const long den = left_n * right_n;
                if (!found || static_cast<__int128>(num) * best_den >
                                  static_cast<__int128>(best_num) * den) {
                    found = true;
                    best_num = num;
                    best_den = den;
                    best_feature = f;
                    best_cut = b;
                }
            }
        }
        // require a strict impurity decrease over the unsplit node
        if (!found ||
            static_cast<__int128>(best_num) * n <= static_cast<__int128>(sum_sq) * best_den) {
            return make_leaf(counts, n);
        }

        std::vector<int> left, right;
        left.reserve(samples.size());
        for (int s : samples) {
            if (data.codes[static_cast<size_t>(s) * data.d + best_feature] <= best_cut) {
                left.push_back(s);
            } else {
                right.push_back(s);
            }
        }

        {
            // mean-decrease-in-impurity bookkeeping (double precision is fine here)
            auto gini = [&](long sq, long m) {
                return 1.0 - static_cast<double>(sq) / (static_cast<double>(m) * m);
            };
            long lsq = 0, rsq = 0;
            std::vector<long> lc(num_classes, 0);
            for (int s : left) lc[y[s]] += 1;
            for (int c = 0; c < num_classes; ++c) {
                lsq += lc[c] * lc[c];
                const long rc = counts[c] - lc[c];
                rsq += rc * rc;
            }
            const long ln = static_cast<long>(left.size()), rn = n - ln;
            const double decrease =
                gini(sum_sq, n) - (static_cast<double>(ln) / n) * gini(lsq, ln) -
                (static_cast<double>(rn) / n) * gini(rsq, rn);
            split_gain[best_feature] += (static_cast<double>(n) / root_size) * decrease;
        }

        TreeNode node;
        node.feature = best_feature;
        node.threshold = data.cuts[best_feature][best_cut];
        const int index = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(node);
        samples.clear();
        samples.shrink_to_fit();
        const int left_index = build(left, depth + 1);
        const int right_index = build(right, depth + 1);
        tree.nodes[index].left = left_index;
        tree.nodes[index].right = right_index;
        return index;
    }
};

}  // namespace

ForestModel train_forest(const std::vector<std::vector<double>>& X,
                         const std::vector<std::string>& y, const ForestParams& params,
                         uint64_t seed) {
    if (X.empty()) throw ValueError("empty training matrix");
    if (X.size() != y.size()) throw ValueError("labels do not match matrix rows");

    ForestModel model;
    model.classes = sorted_classes(y);
    model.params = params;
    model.params.max_bins = std::clamp(params.max_bins, 2, 256);
    model.seed = seed;
    model.num_features = static_cast<int>(X[0].size());
    model.split_gain.assign(X[0].size(), 0.0);

    const auto ids = class_ids(y, model.classes);
    const Binned data = bin_data(X, model.params.max_bins);

    model.trees.reserve(params.trees);
    for (int t = 0; t < params.trees; ++t) {
        Rng rng(derive_seed(seed, 0x74726565ULL, static_cast<uint64_t>(t)));
        std::vector<int> samples(data.n);
        for (size_t i = 0; i < data.n; ++i) samples[i] = static_cast<int>(rng.below(data.n));
        TreeBuilder builder(data, ids, static_cast<int>(model.classes.size()), model.params, rng,
                            model.split_gain);
        builder.root_size = data.n;
        builder.build(samples, 0);
        model.trees.push_back(std::move(builder.tree));
    }
    return model;
}

std::vector<double> forest_scores(const ForestModel& m, const std::vector<double>& row) {
    if (row.size() != static_cast<size_t>(m.num_features)) {
        throw ShapeError("feature count mismatch in forest prediction");
    }
    const size_t C = m.classes.size();
    std::vector<double> scores(C, 0.0);
    for (const auto& tree : m.trees) {
        int node = 0;
        while (tree.nodes[node].feature >= 0) {
            const TreeNode& nd = tree.nodes[node];
            node = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        const int off = tree.nodes[node].leaf_offset;
        for (size_t c = 0; c < C; ++c) scores[c] += tree.leaf_dist[off + c];
    }
    for (double& s : scores) s /= m.trees.size();
    return scores;
}

// ---- Margin classifier ----

MarginModel train_margin(const std::vector<std::vector<double>>& X,
                         const std::vector<std::string>& y, const MarginParams& params,
                         uint64_t seed) {
    if (X.empty()) throw ValueError("empty training matrix");
    if (X.size() != y.size()) throw ValueError("labels do not match matrix rows");

    MarginModel model;
    model.classes = sorted_classes(y);
    model.params = params;
    model.seed = seed;
    model.num_features = static_cast<int>(X[0].size());
    const auto ids = class_ids(y, model.classes);
    const size_t n = X.size(), d = X[0].size();

    for (size_t c = 0; c < model.classes.size(); ++c) {
        Rng rng(derive_seed(seed, 0x6d617267696eULL, static_cast<uint64_t>(c)));
        std::vector<double> w(d, 0.0);
        double b = 0.0;
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        long t = 0;
        for (int epoch = 0; epoch < params.epochs; ++epoch) {
            rng.shuffle(order);
            for (size_t i : order) {
                ++t;
                const double eta = 1.0 / (params.lambda * t);
                const double yi = ids[i] == static_cast<int>(c) ? 1.0 : -1.0;
                double dot = b;
                for (size_t j = 0; j < d; ++j) dot += w[j] * X[i][j];
                const double scale = 1.0 - eta * params.lambda;
                if (yi * dot < 1.0) {
                    for (size_t j = 0; j < d; ++j) w[j] = scale * w[j] + eta * yi * X[i][j];
                    b += eta * yi;
                } else {
                    for (size_t j = 0; j < d; ++j) w[j] *= scale;
                }
            }
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(b);
    }
    return model;
}

std::vector<double> margin_scores(const MarginModel& m, const std::vector<double>& row) {
    if (row.size() != static_cast<size_t>(m.num_features)) {
        throw ShapeError("feature count mismatch in margin prediction");
    }
    std::vector<double> scores(m.classes.size());
    for (size_t c = 0; c < m.classes.size(); ++c) {
        double dot = m.biases[c];
        for (size_t j = 0; j < row.size(); ++j) dot += m.weights[c][j] * row[j];
        scores[c] = dot;
    }
    return scores;
}

// ---- Backend dispatch ----

Backend backend_from_string(const std::string& name) {
    if (name == "forest") return Backend::forest;
    if (name == "margin") return Backend::margin;
    throw ValueError("unknown backend: " + name);
}

std::string to_string(Backend b) { return b == Backend::forest ? "forest" : "margin"; }

const std::vector<std::string>& ClassifierModel::classes() const {
    return backend == Backend::forest ? forest->classes : margin->classes;
}

std::vector<double> ClassifierModel::scores(const std::vector<double>& row) const {
    return backend == Backend::forest ? forest_scores(*forest, row) : margin_scores(*margin, row);
}

std::string ClassifierModel::predict(const std::vector<double>& row) const {
    const auto s = scores(row);
    const size_t best = std::max_element(s.begin(), s.end()) - s.begin();
    return classes()[best];
}

// ---- Two-stage procedure ----

namespace {

ClassifierModel train_backend(const std::vector<std::vector<double>>& X,
                              const std::vector<std::string>& y, const TrainConfig& config,
                              uint64_t seed) {
    ClassifierModel m;
    m.backend = config.backend;
    if (config.backend == Backend::forest) {
        m.forest = train_forest(X, y, config.forest, seed);
    } else {
        m.margin = train_margin(X, y, config.margin, seed);
    }
    return m;
}

}  // namespace

TwoStageModel train_two_stage(const features::FeatureMatrix& m,
                              const std::vector<size_t>& train_rows, const TrainConfig& config,
                              uint64_t seed) {
    if (train_rows.empty()) throw ValueError("no training rows");
    std::vector<std::vector<double>> X;
    std::vector<std::string> labels;
    X.reserve(train_rows.size());
    labels.reserve(train_rows.size());
    for (size_t r : train_rows) {
        X.push_back(m.rows[r]);
        labels.push_back(m.labels[r]);
    }

    TwoStageModel model;
    model.preprocess = fit_preprocess(X, labels, config.top_k);
    const auto Xp = apply_preprocess(model.preprocess, X);

    std::vector<std::string> stage1_labels;
    stage1_labels.reserve(labels.size());
    for (const auto& l : labels) {
        stage1_labels.push_back(l == frames::kIdleLabel ? frames::kIdleLabel : "active");
    }
    model.stage1 = train_backend(Xp, stage1_labels, config, derive_seed(seed, 1));

    std::vector<std::vector<double>> Xa;
    std::vector<std::string> active_labels;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != frames::kIdleLabel) {
            Xa.push_back(Xp[i]);
            active_labels.push_back(labels[i]);
        }
    }
    if (Xa.empty()) throw ValueError("training set has no active-app rows");
    model.stage2 = train_backend(Xa, active_labels, config, derive_seed(seed, 2));
    return model;
}

SessionInference two_stage_infer(const features::FeatureMatrix& m,
                                 const std::vector<size_t>& session_rows,
                                 const TwoStageModel& model) {
    if (session_rows.empty()) throw SessionUnscorableError("session has no surviving windows");

    SessionInference out;
    out.session_id = m.session_ids[session_rows.front()];

    const auto& s1_classes = model.stage1.classes();
    const auto active_it = std::find(s1_classes.begin(), s1_classes.end(), "active");
    const bool has_active = active_it != s1_classes.end();
    const size_t active_idx = active_it - s1_classes.begin();

    std::vector<std::vector<double>> transformed;
    transformed.reserve(session_rows.size());
    long active_votes = 0;
    for (size_t r : session_rows) {
        PredictionRecord rec;
        rec.session_id = m.session_ids[r];
        rec.window_start = m.window_starts[r];
        auto xp = apply_preprocess(model.preprocess, m.rows[r]);
        if (has_active) {
            const auto s1 = model.stage1.scores(xp);
            // stage-1 tie resolves toward active
            double best = s1[active_idx];
            size_t best_c = active_idx;
            for (size_t c = 0; c < s1.size(); ++c) {
                if (s1[c] > best) {
                    best = s1[c];
                    best_c = c;
                }
            }
            rec.stage1_active = best_c == active_idx;
        } else {
            rec.stage1_active = false;  // idle-only training set
        }
        if (rec.stage1_active) ++active_votes;
        transformed.push_back(std::move(xp));
        out.windows.push_back(std::move(rec));
    }

    const long idle_votes = static_cast<long>(session_rows.size()) - active_votes;
    if (idle_votes > active_votes) {
        out.label = frames::kIdleLabel;  // stage 2 skipped entirely
        return out;
    }

    const auto& s2_classes = model.stage2.classes();
    std::vector<long> votes(s2_classes.size(), 0);
    std::vector<double> score_sums(s2_classes.size(), 0.0);
    for (size_t i = 0; i < out.windows.size(); ++i) {
        const auto s2 = model.stage2.scores(transformed[i]);
        const size_t best = std::max_element(s2.begin(), s2.end()) - s2.begin();
        out.windows[i].stage2_label = s2_classes[best];
        out.windows[i].stage2_scores = s2;
        votes[best] += 1;
        for (size_t c = 0; c < s2.size(); ++c) score_sums[c] += s2[c];
    }

    // plurality, then higher mean score, then lexicographic (classes sorted)
    size_t winner = 0;
    for (size_t c = 1; c < votes.size(); ++c) {
        if (votes[c] > votes[winner] ||
            (votes[c] == votes[winner] && score_sums[c] > score_sums[winner])) {
            winner = c;
        }
    }
    out.label = s2_classes[winner];
    return out;
}

// ---- Importance ----

std::vector<double> feature_importance(const ForestModel& m) {
    std::vector<double> imp = m.split_gain;
    double total = 0.0;
    for (double v : imp) total += v;
    if (total <= 0.0) {
        // degenerate (splitless) forest: report a flat profile
        std::fill(imp.begin(), imp.end(), 1.0 / imp.size());
        return imp;
    }
    for (double& v : imp) v /= total;
    return imp;
}

GridImportance map_to_grid(const std::vector<double>& importances,
                           const std::vector<std::string>& selected_names, int n) {
    if (importances.size() != selected_names.size()) {
        throw ValueError("importance and name counts differ");
    }
    GridImportance g;
    g.n = n;
    g.cell.assign(static_cast<size_t>(n) * n, 0.0);
    for (size_t i = 0; i < importances.size(); ++i) {
        const auto p = features::parse_feature_name(selected_names[i]);
        if (p.kind == features::ParsedName::Kind::context) continue;
        if (p.i < 0 || p.i >= n || p.j < 0 || p.j >= n) {
            throw ValueError("feature name outside grid: " + selected_names[i]);
        }
        g.cell[static_cast<size_t>(p.i) * n + p.j] += importances[i];
    }

    const size_t cells = g.cell.size();
    std::vector<size_t> order(cells);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (g.cell[a] != g.cell[b]) return g.cell[a] > g.cell[b];
        return a < b;
    });
    const size_t flag_count = std::max<size_t>(1, static_cast<size_t>(std::round(cells * 0.2)));
    g.top20.assign(cells, 0);
    g.bottom20.assign(cells, 0);
    for (size_t i = 0; i < flag_count; ++i) {
        g.top20[order[i]] = 1;
        g.bottom20[order[cells - 1 - i]] = 1;
    }
    return g;
}

// ---- Persistence ----

namespace {

json forest_to_json(const ForestModel& m) {
    json j;
    j["classes"] = m.classes;
    j["params"] = {{"trees", m.params.trees},
                   {"max_depth", m.params.max_depth},
                   {"min_leaf", m.params.min_leaf},
                   {"features_per_split", m.params.features_per_split},
                   {"max_bins", m.params.max_bins}};
    j["seed"] = m.seed;
    j["num_features"] = m.num_features;
    j["split_gain"] = m.split_gain;
    json trees = json::array();
    for (const auto& tree : m.trees) {
        json nodes = json::array();
        for (const auto& nd : tree.nodes) {
            nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.leaf_offset});
        }
        trees.push_back({{"nodes", nodes}, {"leaf_dist", tree.leaf_dist}});
    }
    j["trees"] = trees;
    return j;
}

ForestModel forest_from_json(const json& j) {
    ForestModel m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    const auto& p = j.at("params");
    m.params.trees = p.at("trees").get<int>();
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.min_leaf = p.at("min_leaf").get<int>();
    m.params.features_per_split = p.at("features_per_split").get<int>();
    m.params.max_bins = p.at("max_bins").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.num_features = j.at("num_features").get<int>();
    m.split_gain = j.at("split_gain").get<std::vector<double>>();
    for (const auto& tj : j.at("trees")) {
        Tree tree;
        for (const auto& nj : tj.at("nodes")) {
            TreeNode nd;
            nd.feature = nj.at(0).get<int>();
            nd.threshold = nj.at(1).get<double>();
            nd.left = nj.at(2).get<int>();
            nd.right = nj.at(3).get<int>();
            nd.leaf_offset = nj.at(4).get<int>();
            tree.nodes.push_back(nd);
        }
        tree.leaf_dist = tj.at("leaf_dist").get<std::vector<double>>();
        m.trees.push_back(std::move(tree));
    }
    return m;
}

json margin_to_json(const MarginModel& m) {
    json j;
    j["classes"] = m.classes;
    j["params"] = {{"lambda", m.params.lambda}, {"epochs", m.params.epochs}};
    j["seed"] = m.seed;
    j["num_features"] = m.num_features;
    j["weights"] = m.weights;
    j["biases"] = m.biases;
    return j;
}

MarginModel margin_from_json(const json& j) {
    MarginModel m;
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.params.lambda = j.at("params").at("lambda").get<double>();
    m.params.epochs = j.at("params").at("epochs").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.num_features = j.at("num_features").get<int>();
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.biases = j.at("biases").get<std::vector<double>>();
    return m;
}

json classifier_to_json(const ClassifierModel& m) {
    json j;
    j["backend"] = to_string(m.backend);
    if (m.backend == Backend::forest) {
        j["forest"] = forest_to_json(*m.forest);
    } else {
        j["margin"] = margin_to_json(*m.margin);
    }
    return j;
}

ClassifierModel classifier_from_json(const json& j) {
    ClassifierModel m;
    m.backend = backend_from_string(j.at("backend").get<std::string>());
    if (m.backend == Backend::forest) {
        m.forest = forest_from_json(j.at("forest"));
    } else {
        m.margin = margin_from_json(j.at("margin"));
    }
    return m;
}

}  // namespace

void save_model(const TwoStageModel& m, const fs::path& path) {
    json j;
    j["version"] = m.version;
    j["preprocess"] = {{"input_width", m.preprocess.input_width},
                       {"medians", m.preprocess.medians},
                       {"keep", m.preprocess.keep},
                       {"mean", m.preprocess.mean},
                       {"std", m.preprocess.std},
                       {"selected", m.preprocess.selected}};
    j["stage1"] = classifier_to_json(m.stage1);
    j["stage2"] = classifier_to_json(m.stage2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << j.dump() << "\n";
}

TwoStageModel load_model(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("model parse failure: " + std::string(e.what()));
    }
    TwoStageModel m;
    m.version = j.at("version").get<std::string>();
    if (m.version != kModelVersion) {
        throw ValueError("model version mismatch: found " + m.version + ", expected " +
                         kModelVersion);
    }
    const auto& p = j.at("preprocess");
    m.preprocess.input_width = p.at("input_width").get<int>();
    m.preprocess.medians = p.at("medians").get<std::vector<double>>();
    m.preprocess.keep = p.at("keep").get<std::vector<uint8_t>>();
    m.preprocess.mean = p.at("mean").get<std::vector<double>>();
    m.preprocess.std = p.at("std").get<std::vector<double>>();
    m.preprocess.selected = p.at("selected").get<std::vector<int>>();
    m.stage1 = classifier_from_json(j.at("stage1"));
    m.stage2 = classifier_from_json(j.at("stage2"));
    return m;
}

}  // namespace thermaltap::classify
