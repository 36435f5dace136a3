// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qtind/query_eval.hpp"
#include "qtind/synthetic.hpp"

using namespace qtind;

namespace {

using ListSpec = std::map<std::string, std::vector<Posting>>;

ImpactIndex make_index(std::uint64_t doc_count, const ListSpec& spec) {
    ImpactIndex::ListMap lists;
    for (const auto& [term, postings] : spec) lists.emplace(term, PostingList(term, postings));
    return ImpactIndex(std::move(lists), doc_count, {true, 1.0}, false, "test");
}

Query query(std::vector<std::string> terms) { return Query{"q", std::move(terms)}; }

std::vector<ScoredDoc> entries(std::initializer_list<ScoredDoc> list) { return list; }

// Reference scorer: walks every document and every query-term occurrence,
// reading impacts straight out of the posting vectors.
std::vector<ScoredDoc> oracle_topk(const ListSpec& spec, std::uint64_t doc_count, const Query& q, std::size_t k) {
    std::vector<ScoredDoc> all;
    for (DocId d = 0; d < doc_count; ++d) {
        double s = 0.0;
        for (const auto& t : q.terms) {
            auto it = spec.find(t);
            if (it == spec.end()) continue;
            for (const auto& p : it->second) {
                if (p.doc == d) s += p.impact;
            }
        }
        if (s > 0.0) all.push_back({d, s});
    }
    std::sort(all.begin(), all.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        return a.score != b.score ? a.score > b.score : a.doc < b.doc;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

// Random index whose impact distribution is one of several shapes.
struct RandomInstance {
    ListSpec spec;
    std::uint64_t doc_count;
    Query q;
    std::size_t k;
};

RandomInstance random_instance(synthetic::Rng& rng) {
    RandomInstance inst;
    inst.doc_count = rng.between(1, 300);
    const auto terms = rng.between(1, 6);
    const auto shape = rng.between(0, 3);
    for (std::size_t t = 0; t < terms; ++t) {
        std::vector<Posting> postings;
        const double scale = shape == 3 ? std::pow(10.0, static_cast<double>(rng.between(0, 4)) - 2.0) : 1.0;
        for (DocId d = 0; d < inst.doc_count; ++d) {
            if (rng.uniform() > 0.3) continue;
            double v = 0.0;
            switch (shape) {
                case 0: v = 1.0; break;                                                   // uniform ties
                case 1: v = static_cast<double>(rng.between(1, 4)); break;                // coarse levels
                case 2: v = 0.01 + rng.uniform(); break;                                  // continuous
                default: v = scale * (0.01 + std::pow(rng.uniform(), 4.0)); break;       // skewed
            }
            postings.push_back({d, v});
        }
        if (!postings.empty()) inst.spec["t" + std::to_string(t)] = postings;
    }
    const auto qlen = rng.between(1, 5);
    for (std::size_t i = 0; i < qlen; ++i) inst.q.terms.push_back("t" + std::to_string(rng.between(0, terms)));
    inst.k = rng.between(1, 20);
    return inst;
}

bool same_results(const std::vector<ScoredDoc>& got, const std::vector<ScoredDoc>& want) {
    if (got.size() != want.size()) return false;
    for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i].doc != want[i].doc) return false;
        if (std::abs(got[i].score - want[i].score) > 1e-9 * std::max(1.0, std::abs(want[i].score))) return false;
    }
    return true;
}

}  // namespace

TEST(AggregateScore, SumsImpactsWithMultiplicity) {
    const auto index = make_index(8, {{"a", {{7, 1.5}}}, {"b", {{7, 2.0}}}});
    EXPECT_EQ(aggregate_score(query({"a", "b"}), 7, index), 3.5);
    EXPECT_EQ(aggregate_score(query({"a", "a"}), 7, index), 3.0);
    EXPECT_EQ(aggregate_score(query({"a", "a"}), 7, index, TermMode::Deduplicated), 1.5);
    EXPECT_EQ(aggregate_score(query({"zzz"}), 7, index), 0.0);
    EXPECT_EQ(aggregate_score(query({"a"}), 3, index), 0.0);
    EXPECT_EQ(aggregate_score(query({}), 7, index), 0.0);
}

TEST(AggregateScore, AdditiveAndMonotoneOverRandomQueries) {
    synthetic::Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = random_instance(rng);
        const auto index = make_index(inst.doc_count, inst.spec);
        auto q2 = random_instance(rng).q;
        Query both{"q", inst.q.terms};
        both.terms.insert(both.terms.end(), q2.terms.begin(), q2.terms.end());
        for (DocId d = 0; d < inst.doc_count; ++d) {
            const double s1 = aggregate_score(inst.q, d, index);
            const double s2 = aggregate_score(q2, d, index);
            const double s12 = aggregate_score(both, d, index);
            EXPECT_NEAR(s12, s1 + s2, 1e-12 * std::max(1.0, s12));
            EXPECT_GE(s12 + 1e-12 * std::max(1.0, s12), s1);
            Query doubled{"q", inst.q.terms};
            doubled.terms.insert(doubled.terms.end(), inst.q.terms.begin(), inst.q.terms.end());
            EXPECT_EQ(aggregate_score(doubled, d, index), 2.0 * s1);
        }
    }
}

TEST(RetrieveTopK, ReadsOffImpactOrder) {
    const auto index = make_index(3, {{"a", {{2, 5.0}, {0, 3.0}, {1, 1.0}}}});
    EXPECT_EQ(retrieve_topk(query({"a"}), index, 2).entries, entries({{2, 5.0}, {0, 3.0}}));
    EXPECT_EQ(retrieve_topk_pruned(query({"a"}), index, 2).entries, entries({{2, 5.0}, {0, 3.0}}));
}

TEST(RetrieveTopK, TiesBreakByDocId) {
    const auto index = make_index(2, {{"a", {{1, 2.0}, {0, 2.0}}}});
    EXPECT_EQ(retrieve_topk(query({"a"}), index, 2).entries, entries({{0, 2.0}, {1, 2.0}}));
    EXPECT_EQ(retrieve_topk_pruned(query({"a"}), index, 2).entries, entries({{0, 2.0}, {1, 2.0}}));
}

TEST(RetrieveTopK, FewerScoringDocsThanK) {
    std::vector<Posting> postings;
    for (DocId d = 0; d < 100; ++d) postings.push_back({d, 1.0 + d});
    const auto index = make_index(200, {{"a", postings}});
    EXPECT_EQ(retrieve_topk(query({"a", "b"}), index, 1000).entries.size(), 100u);
    EXPECT_EQ(retrieve_topk_pruned(query({"a", "b"}), index, 1000).entries.size(), 100u);
    EXPECT_TRUE(retrieve_topk(query({"zzz"}), index, 10).entries.empty());
    EXPECT_TRUE(retrieve_topk_pruned(query({}), index, 10).entries.empty());
    EXPECT_THROW(retrieve_topk(query({"a"}), index, 0), ContractViolation);
    EXPECT_THROW(retrieve_topk_pruned(query({"a"}), index, 0), ContractViolation);
}

TEST(RetrieveTopK, MatchesBruteForceOracle) {
    synthetic::Rng rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto inst = random_instance(rng);
        const auto index = make_index(inst.doc_count, inst.spec);
        const auto want = oracle_topk(inst.spec, inst.doc_count, inst.q, inst.k);
        ASSERT_TRUE(same_results(retrieve_topk(inst.q, index, inst.k).entries, want)) << "trial " << trial;
    }
}

TEST(RetrieveTopKPruned, IdenticalToExhaustiveOnRandomInstances) {
    synthetic::Rng rng(77);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto inst = random_instance(rng);
        const auto index = make_index(inst.doc_count, inst.spec);
        for (auto mode : {TermMode::Multiset, TermMode::Deduplicated}) {
            ASSERT_EQ(retrieve_topk_pruned(inst.q, index, inst.k, mode).entries,
                      retrieve_topk(inst.q, index, inst.k, mode).entries)
                << "trial " << trial;
        }
    }
}

TEST(RetrieveTopKPruned, SkipsPostingsWhenImpactsAreSkewed) {
    std::vector<Posting> big, small;
    for (DocId d = 0; d < 10; ++d) big.push_back({d, 100.0 - d});
    for (DocId d = 0; d < 1000; ++d) small.push_back({d, 0.001 + 1e-6 * d});
    const auto index = make_index(1000, {{"rare", big}, {"common", small}});
    EvalStats full, pruned;
    const auto q = query({"common", "rare"});
    const auto a = retrieve_topk(q, index, 3, TermMode::Multiset, &full);
    const auto b = retrieve_topk_pruned(q, index, 3, TermMode::Multiset, &pruned);
    EXPECT_EQ(a.entries, b.entries);
    EXPECT_EQ(full.postings_scanned, 1010u);
    EXPECT_LT(pruned.postings_scanned, full.postings_scanned);
}

TEST(RetrieveTopKPruned, SingleTermScansAtMostTheList) {
    synthetic::Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        auto inst = random_instance(rng);
        if (inst.spec.empty()) continue;
        const auto& [term, postings] = *inst.spec.begin();
        const auto index = make_index(inst.doc_count, inst.spec);
        EvalStats stats;
        retrieve_topk_pruned(query({term}), index, inst.k, TermMode::Multiset, &stats);
        EXPECT_LE(stats.postings_scanned, postings.size());
    }
}

TEST(Rerank, KeepsZeroScoringCandidatesAfterPositives) {
    const auto index = make_index(10, {{"a", {{1, 2.0}}}});
    const std::vector<DocId> c1{3, 1};
    EXPECT_EQ(rerank(query({"a"}), std::span<const DocId>(c1), index).entries, entries({{1, 2.0}, {3, 0.0}}));
    const std::vector<DocId> c2{9, 2};
    EXPECT_EQ(rerank(query({"a"}), std::span<const DocId>(c2), index).entries, entries({{2, 0.0}, {9, 0.0}}));
    EXPECT_EQ(rerank(query({"a"}), std::span<const DocId>(c2), index, 1).entries.size(), 1u);
}

TEST(Rerank, WholeCorpusMatchesRetrievalThenZeros) {
    synthetic::Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = random_instance(rng);
        const auto index = make_index(inst.doc_count, inst.spec);
        std::vector<DocId> all(inst.doc_count);
        for (DocId d = 0; d < inst.doc_count; ++d) all[d] = static_cast<DocId>(inst.doc_count - 1 - d);
        const auto reranked = rerank(inst.q, std::span<const DocId>(all), index, all.size()).entries;
        const auto retrieved = retrieve_topk(inst.q, index, all.size()).entries;
        ASSERT_EQ(reranked.size(), all.size());
        for (std::size_t i = 0; i < retrieved.size(); ++i) EXPECT_EQ(reranked[i], retrieved[i]);
        for (std::size_t i = retrieved.size(); i < reranked.size(); ++i) {
            EXPECT_EQ(reranked[i].score, 0.0);
            if (i > retrieved.size()) EXPECT_LT(reranked[i - 1].doc, reranked[i].doc);
        }
    }
}

TEST(Rerank, AcceptsScoreTableSource) {
    ScoreTable table;
    table.insert("a", 4, 1.0);
    table.insert("a", 5, -2.0);
    table.insert("b", 5, 0.5);
    CandidateSet cands{"q", {5, 4, 6}};
    EXPECT_EQ(rerank(query({"a", "b"}), cands, table).entries, entries({{4, 1.0}, {5, 0.5}, {6, 0.0}}));
}
