// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "qtind/corpus.hpp"
#include "qtind/error.hpp"
#include "qtind/query_eval.hpp"

namespace qtind {

/// query_id -> ranked results, rank 1 first.
using Run = std::map<std::string, std::vector<ScoredDoc>>;

/// Orders query ids numerically when both parse as integers, else lexically.
inline bool query_id_less(const std::string& a, const std::string& b) {
    auto x = detail::parse_int<unsigned long long>(a);
    auto y = detail::parse_int<unsigned long long>(b);
    if (x && y) return *x < *y;
    if (x != y) return x.has_value();  // numeric ids first
    return a < b;
}

inline Run to_run(std::span<const RankedList> lists) {
    Run run;
    for (const auto& list : lists) run[list.query_id] = list.entries;
    return run;
}

/// TREC run lines `query_id Q0 doc_id rank score tag`, queries in id order.
inline void write_run(std::ostream& out, std::span<const RankedList> lists, const std::string& tag) {
    std::vector<const RankedList*> ordered;
    for (const auto& l : lists) ordered.push_back(&l);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const RankedList* a, const RankedList* b) { return query_id_less(a->query_id, b->query_id); });
    const auto old_precision = out.precision(10);
    for (const auto* list : ordered) {
        std::size_t rank = 1;
        for (const auto& e : list->entries) {
            out << list->query_id << " Q0 " << e.doc << ' ' << rank++ << ' ' << e.score << ' ' << tag << '\n';
        }
    }
    out.precision(old_precision);
}

/// Reads a TREC run; each query's results are ordered by the rank column.
inline Run read_run(std::istream& in, const std::string& name = "<run>") {
    std::map<std::string, std::vector<std::pair<long long, ScoredDoc>>> rows;
    std::map<std::string, std::set<DocId>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (detail::getline_clean(in, line)) {
        ++line_no;
        auto f = detail::split_ws(line);
        if (f.empty()) continue;
        if (f.size() != 6) throw LoadError(name, line_no, "expected 6 fields: qid Q0 doc rank score tag");
        DocId doc = detail::parse_doc_id(f[2], name, line_no);
        auto rank = detail::parse_int<long long>(f[3]);
        auto score = detail::parse_double(f[4]);
        if (!rank || !score) throw LoadError(name, line_no, "invalid rank or score");
        std::string qid(f[0]);
        if (!seen[qid].insert(doc).second) {
            throw LoadError(name, line_no, "doc " + std::to_string(doc) + " repeated for query " + qid);
        }
        rows[qid].push_back({*rank, ScoredDoc{doc, *score}});
    }
    Run run;
    for (auto& [qid, entries] : rows) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& out = run[qid];
        for (const auto& e : entries) out.push_back(e.second);
    }
    return run;
}

inline Run load_run(const std::string& path) {
    auto in = detail::open_input(path);
    return read_run(in, path);
}

struct PerQueryMetric {
    std::string query_id;
    double value = 0.0;
};

struct EvalReport {
    std::string metric;
    double mean = 0.0;
    std::vector<PerQueryMetric> per_query;  // in qrels query order
    std::size_t query_count = 0;
    std::size_t skipped_run_queries = 0;  // run queries without judgments
};

namespace detail {

// Evaluates every judged query; judged queries absent from the run score 0.
template <typename PerQuery>
EvalReport evaluate(const Run& run, const Qrels& qrels, std::string metric, PerQuery&& per_query) {
    EvalReport report;
    report.metric = std::move(metric);
    bool overlap = false;
    for (const auto& [qid, _] : run) {
        if (qrels.contains(qid)) {
            overlap = true;
        } else {
            ++report.skipped_run_queries;
        }
    }
    if (!overlap) throw Error("run and qrels share no query ids");
    double sum = 0.0;
    for (const auto& [qid, relevant] : qrels) {
        auto it = run.find(qid);
        double value = 0.0;
        if (it != run.end()) value = per_query(it->second, relevant);
        report.per_query.push_back({qid, value});
        sum += value;
    }
    report.query_count = report.per_query.size();
    report.mean = sum / static_cast<double>(report.query_count);
    return report;
}

}  // namespace detail

/// Mean over judged queries of 1/rank of the first relevant doc in the top k.
inline EvalReport mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k = 10) {
    return detail::evaluate(run, qrels, "mrr@" + std::to_string(k),
                            [k](const std::vector<ScoredDoc>& ranked, const std::set<DocId>& relevant) {
                                const auto depth = std::min(k, ranked.size());
                                for (std::size_t i = 0; i < depth; ++i) {
                                    if (relevant.contains(ranked[i].doc)) return 1.0 / static_cast<double>(i + 1);
                                }
                                return 0.0;
                            });
}

/// Mean over judged queries of |relevant in top k| / |relevant|.
inline EvalReport recall_at_k(const Run& run, const Qrels& qrels, std::size_t k = 1000) {
    return detail::evaluate(run, qrels, "recall@" + std::to_string(k),
                            [k](const std::vector<ScoredDoc>& ranked, const std::set<DocId>& relevant) {
                                const auto depth = std::min(k, ranked.size());
                                std::size_t hits = 0;
                                for (std::size_t i = 0; i < depth; ++i) hits += relevant.contains(ranked[i].doc);
                                return static_cast<double>(hits) / static_cast<double>(relevant.size());
                            });
}

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    std::size_t n = 0;
    double mean_difference = 0.0;
};

/// Two-sided p-value of Student's t with `dof` degrees of freedom, via the
/// regularized incomplete beta function: p = I_{dof/(dof+t^2)}(dof/2, 1/2).
inline double student_t_two_sided_p(double t, double dof) {
    if (std::isinf(t)) return 0.0;
    return boost::math::ibeta(dof / 2.0, 0.5, dof / (dof + t * t));
}

/// Paired two-sided t-test on a[i] - b[i]. All-zero differences give p = 1;
/// zero variance with a nonzero mean gives |t| = inf and p = 0.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("paired_ttest: samples differ in length");
    if (a.size() < 2) throw Error("paired_ttest: need at least 2 pairs");
    const auto n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    double sum = 0.0;
    for (double x : d) sum += x;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    TTestResult r;
    r.n = n;
    r.mean_difference = mean;
    if (ss == 0.0) {
        if (mean == 0.0) return r;
        r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        return r;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
    return r;
}

/// Aligns two per-query reports by query id before testing. Differing query
/// sets throw, naming the ids found in only one of them.
inline TTestResult paired_ttest(std::span<const PerQueryMetric> a, std::span<const PerQueryMetric> b) {
    std::map<std::string, double> left, right;
    for (const auto& m : a) left[m.query_id] = m.value;
    for (const auto& m : b) right[m.query_id] = m.value;
    std::vector<std::string> only;
    for (const auto& [q, _] : left) {
        if (!right.contains(q)) only.push_back(q);
    }
    for (const auto& [q, _] : right) {
        if (!left.contains(q)) only.push_back(q);
    }
    if (!only.empty()) {
        std::string msg = "paired_ttest: query sets differ:";
        for (const auto& q : only) msg += " " + q;
        throw Error(msg);
    }
    std::vector<double> x, y;
    for (const auto& [q, v] : left) {
        x.push_back(v);
        y.push_back(right.at(q));
    }
    return paired_ttest(std::span<const double>(x), std::span<const double>(y));
}

}  // namespace qtind
