#include "zerosight/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "zerosight/rng.hpp"

namespace zerosight {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double t = a[i] - b[i];
        acc += t * t;
    }
    return acc;
}

struct LloydResult {
    std::vector<std::size_t> assign;
    double wcss = 0.0;
    std::vector<double> history;
};

LloydResult lloyd_once(const Matrix& emb, std::size_t k, Rng rng) {
    const std::size_t n = emb.rows, d = emb.cols;
    std::vector<double> centroids(k * d);

    // k-means++ seeding
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.uniform_index(n));
    std::copy(emb.row(first), emb.row(first) + d, centroids.begin());
    for (std::size_t c = 1; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i)
            min_d2[i] = std::min(min_d2[i], sq_dist(emb.row(i), &centroids[(c - 1) * d], d));
        double total = 0.0;
        for (double v : min_d2) total += v;
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total, acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += min_d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            // all points coincide with chosen centroids; any index works
            pick = static_cast<std::size_t>(rng.uniform_index(n));
        }
        std::copy(emb.row(pick), emb.row(pick) + d, centroids.begin() + c * d);
    }

    LloydResult res;
    res.assign.assign(n, 0);
    const int max_iters = 300;
    double prev_obj = std::numeric_limits<double>::infinity();
    bool segment_reset = false;
    for (int iter = 0; iter < max_iters; ++iter) {
        // assignment, ties to the lowest centroid index
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = sq_dist(emb.row(i), &centroids[0], d);
            std::size_t best_c = 0;
            for (std::size_t c = 1; c < k; ++c) {
                double dist = sq_dist(emb.row(i), &centroids[c * d], d);
                if (dist < best) {
                    best = dist;
                    best_c = c;
                }
            }
            res.assign[i] = best_c;
            obj += best;
        }
        // the Lloyd objective never increases; reseeding an empty cluster
        // starts a fresh monotone segment
        if (!segment_reset && obj > prev_obj * (1.0 + 1e-9) + 1e-12)
            throw NumericError("kmeans: objective increased across a Lloyd iteration");
        segment_reset = false;
        res.history.push_back(obj);
        prev_obj = obj;

        // centroid update
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[res.assign[i]];
            const double* r = emb.row(i);
            double* s = &sums[res.assign[i] * d];
            for (std::size_t j = 0; j < d; ++j) s[j] += r[j];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // reseed to the point farthest from its assigned centroid
                std::size_t far_i = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    double dist =
                        sq_dist(emb.row(i), &centroids[res.assign[i] * d], d);
                    if (dist > far_d) {
                        far_d = dist;
                        far_i = i;
                    }
                }
                std::copy(emb.row(far_i), emb.row(far_i) + d, centroids.begin() + c * d);
                segment_reset = true;
                prev_obj = std::numeric_limits<double>::infinity();
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) {
                double nc = sums[c * d + j] / static_cast<double>(counts[c]);
                double diff = nc - centroids[c * d + j];
                shift += diff * diff;
                centroids[c * d + j] = nc;
            }
        }
        if (std::sqrt(shift) < 1e-6 && !segment_reset) break;
    }

    // final assignment against the settled centroids
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = sq_dist(emb.row(i), &centroids[0], d);
        std::size_t best_c = 0;
        for (std::size_t c = 1; c < k; ++c) {
            double dist = sq_dist(emb.row(i), &centroids[c * d], d);
            if (dist < best) {
                best = dist;
                best_c = c;
            }
        }
        res.assign[i] = best_c;
        obj += best;
    }
    res.wcss = obj;
    return res;
}

}  // namespace

Clustering kmeans(const Matrix& embeddings, std::size_t k, std::uint64_t seed) {
    const std::size_t n = embeddings.rows;
    if (k == 0) throw ConfigError("kmeans: k must be positive");
    if (k > n)
        throw ConfigError("kmeans: k = " + std::to_string(k) + " exceeds sample count " +
                          std::to_string(n));
    if (embeddings.cols == 0) throw ConfigError("kmeans: zero-dimensional embeddings");

    Rng base(seed);
    const int restarts = 10;
    LloydResult best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        LloydResult cur = lloyd_once(embeddings, k, base.fork(static_cast<std::uint64_t>(r)));
        if (!have || cur.wcss < best.wcss) {
            best = std::move(cur);
            have = true;
        }
    }
    Clustering c;
    c.predicted = std::move(best.assign);
    c.k = k;
    c.wcss = best.wcss;
    c.objective_history = std::move(best.history);
    return c;
}

double nmi(const Clustering& clustering) {
    const auto& omega = clustering.predicted;
    const auto& truth = clustering.truth;
    if (omega.size() != truth.size())
        throw ShapeError("nmi: " + std::to_string(omega.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " truth labels");
    if (omega.empty()) throw ShapeError("nmi: empty clustering");
    const std::size_t n = omega.size();

    // compact both label spaces
    auto compact = [](const std::vector<std::size_t>& v, std::vector<std::size_t>& out) {
        std::vector<std::size_t> ids(v);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        out.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            out[i] = static_cast<std::size_t>(
                std::lower_bound(ids.begin(), ids.end(), v[i]) - ids.begin());
        return ids.size();
    };
    std::vector<std::size_t> a, b;
    std::size_t ka = compact(omega, a);
    std::size_t kb = compact(truth, b);

    std::vector<double> table(ka * kb, 0.0), ra(ka, 0.0), rb(kb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        table[a[i] * kb + b[i]] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    const double dn = static_cast<double>(n);
    double h_a = 0.0, h_b = 0.0, mi = 0.0;
    for (std::size_t i = 0; i < ka; ++i)
        if (ra[i] > 0.0) h_a -= (ra[i] / dn) * std::log(ra[i] / dn);
    for (std::size_t j = 0; j < kb; ++j)
        if (rb[j] > 0.0) h_b -= (rb[j] / dn) * std::log(rb[j] / dn);
    for (std::size_t i = 0; i < ka; ++i)
        for (std::size_t j = 0; j < kb; ++j) {
            double nij = table[i * kb + j];
            if (nij > 0.0) mi += (nij / dn) * std::log(dn * nij / (ra[i] * rb[j]));
        }
    double denom = h_a + h_b;
    if (denom <= 0.0) return (ka == 1 && kb == 1) ? 1.0 : 0.0;
    return std::clamp(2.0 * mi / denom, 0.0, 1.0);
}

namespace {

// Neighbor indices of each query in ascending (distance, index) order,
// computed from L2-normalized rows.
std::vector<std::vector<std::size_t>> ranked_neighbors(const Matrix& emb,
                                                       std::size_t upto) {
    const std::size_t n = emb.rows, d = emb.cols;
    Matrix unit(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += emb.at(i, j) * emb.at(i, j);
        double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
        for (std::size_t j = 0; j < d; ++j) unit.at(i, j) = emb.at(i, j) * inv;
    }
    std::vector<std::vector<std::size_t>> ranks(n);
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t q = 0; q < n; ++q) {
        cand.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (i == q) continue;
            cand.emplace_back(sq_dist(unit.row(q), unit.row(i), d), i);
        }
        std::sort(cand.begin(), cand.end());
        std::size_t keep = std::min(upto, cand.size());
        ranks[q].reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) ranks[q].push_back(cand[i].second);
    }
    return ranks;
}

}  // namespace

RecallResult topk_retrieval(const Matrix& embeddings, const std::vector<std::size_t>& labels,
                            const std::vector<std::size_t>& ks) {
    const std::size_t n = embeddings.rows;
    if (labels.size() != n)
        throw ShapeError("topk_retrieval: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    if (n < 2) throw ShapeError("topk_retrieval: need at least 2 samples");
    std::size_t max_k = 0;
    for (std::size_t k : ks) max_k = std::max(max_k, k);

    std::map<std::size_t, std::size_t> class_count;
    for (std::size_t l : labels) ++class_count[l];

    auto ranks = ranked_neighbors(embeddings, max_k);
    RecallResult res;
    std::map<std::size_t, std::size_t> hits;
    for (std::size_t k : ks) hits[k] = 0;
    std::size_t queries = 0;
    for (std::size_t q = 0; q < n; ++q) {
        if (class_count[labels[q]] < 2) {
            ++res.excluded_singletons;
            continue;
        }
        ++queries;
        std::size_t first_hit = max_k + 1;
        for (std::size_t i = 0; i < ranks[q].size(); ++i)
            if (labels[ranks[q][i]] == labels[q]) {
                first_hit = i + 1;
                break;
            }
        for (std::size_t k : ks)
            if (first_hit <= k) ++hits[k];
    }
    for (std::size_t k : ks)
        res.recall_at[k] =
            queries == 0 ? 0.0
                         : 100.0 * static_cast<double>(hits[k]) / static_cast<double>(queries);
    return res;
}

double harmonic_mean(double u, double s) { return u + s > 0.0 ? 2.0 * u * s / (u + s) : 0.0; }

GzslResult gzsl_report(const Matrix& embeddings, const std::vector<std::size_t>& labels,
                       const std::vector<bool>& seen_mask) {
    const std::size_t n = embeddings.rows;
    if (labels.size() != n || seen_mask.size() != n)
        throw ShapeError("gzsl_report: labels/mask size mismatch with " + std::to_string(n) +
                         " rows");
    std::size_t n_seen = 0;
    for (bool b : seen_mask) n_seen += b ? 1 : 0;
    if (n_seen == 0 || n_seen == n)
        throw ConfigError("gzsl_report: both seen and unseen partitions must be non-empty");

    std::map<std::size_t, std::size_t> class_count;
    for (std::size_t l : labels) ++class_count[l];

    auto ranks = ranked_neighbors(embeddings, 1);
    GzslResult res;
    std::size_t u_hits = 0, u_total = 0, s_hits = 0, s_total = 0;
    for (std::size_t q = 0; q < n; ++q) {
        if (class_count[labels[q]] < 2) {
            ++res.excluded_singletons;
            continue;
        }
        bool hit = !ranks[q].empty() && labels[ranks[q][0]] == labels[q];
        if (seen_mask[q]) {
            ++s_total;
            s_hits += hit ? 1 : 0;
        } else {
            ++u_total;
            u_hits += hit ? 1 : 0;
        }
    }
    res.u = u_total == 0 ? 0.0
                         : 100.0 * static_cast<double>(u_hits) / static_cast<double>(u_total);
    res.s = s_total == 0 ? 0.0
                         : 100.0 * static_cast<double>(s_hits) / static_cast<double>(s_total);
    res.h = harmonic_mean(res.u, res.s);
    return res;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    char buf[64];
    auto row = [&](const std::string& metric, double value) {
        std::snprintf(buf, sizeof buf, "%.6f", value);
        os << metric << ',' << buf << ',' << report.split << ',' << report.seed << ','
           << report.config_hash << '\n';
    };
    os << "metric,value,split,seed,config_hash\n";
    row("nmi", report.nmi_value);
    for (auto& [k, v] : report.recall_at) row("r" + std::to_string(k), v);
    if (report.has_gzsl) {
        row("u", report.gzsl.u);
        row("s", report.gzsl.s);
        row("h", report.gzsl.h);
    }
    row("excluded_singletons", static_cast<double>(report.excluded_singletons));
    if (!os) throw ConfigError("write failed: " + path);
}

std::vector<LabelRow> read_labels_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "index,label,seen")
        throw ConfigError(path + ": expected header index,label,seen");
    std::vector<LabelRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        LabelRow r;
        char seen = '0';
        if (std::sscanf(line.c_str(), "%zu,%zu,%c", &r.index, &r.label, &seen) != 3)
            throw ConfigError(path + ": malformed row '" + line + "'");
        r.seen = seen == '1';
        rows.push_back(r);
    }
    return rows;
}

void write_labels_csv(const std::string& path, const std::vector<LabelRow>& rows) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    os << "index,label,seen\n";
    for (const auto& r : rows)
        os << r.index << ',' << r.label << ',' << (r.seen ? 1 : 0) << '\n';
    if (!os) throw ConfigError("write failed: " + path);
}

}  // namespace zerosight
