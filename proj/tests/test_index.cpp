// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qtind/index.hpp"
#include "qtind/synthetic.hpp"

using namespace qtind;

namespace {

Collection make_collection(const std::vector<std::string>& texts) {
    Collection c;
    for (std::size_t i = 0; i < texts.size(); ++i) c.add_text(static_cast<DocId>(i), texts[i]);
    return c;
}

struct ConstantScorer {
    double value = 1.0;
    Impact operator()(const PairContext&) const { return Impact{value}; }
    std::string name() const { return "constant"; }
};

// Constant 1.0 except a chosen (term, doc) pair.
struct ExceptScorer {
    std::string term;
    DocId doc;
    double value;
    Impact operator()(const PairContext& ctx) const {
        return Impact{ctx.term == term && ctx.doc.id == doc ? value : 1.0};
    }
    std::string name() const { return "except"; }
};

struct ThrowingScorer {
    Impact operator()(const PairContext& ctx) const {
        if (ctx.term == "b") throw std::runtime_error("model exploded");
        return Impact{1.0};
    }
    std::string name() const { return "throwing"; }
};

std::vector<Posting> postings_of(const ImpactIndex& index, const std::string& term) {
    const auto* list = index.find(term);
    if (!list) return {};
    return {list->postings().begin(), list->postings().end()};
}

IndexFileError::Kind failure_kind(const std::string& bytes) {
    try {
        deserialize_index(bytes);
    } catch (const IndexFileError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected IndexFileError";
    return IndexFileError::Kind::Io;
}

}  // namespace

TEST(BuildIndex, TwoDocEnumeration) {
    const auto c = make_collection({"a b", "a"});
    const auto index = build_index(c, ConstantScorer{}, {true, 1.0});
    EXPECT_EQ(postings_of(index, "a"), (std::vector<Posting>{{0, 1.0}, {1, 1.0}}));
    EXPECT_EQ(postings_of(index, "b"), (std::vector<Posting>{{0, 1.0}}));
    EXPECT_EQ(index.doc_count(), 2u);
    EXPECT_TRUE(index.check().empty());
}

TEST(BuildIndex, DfCapDropsWholeTerm) {
    const auto c = make_collection({"a b", "a"});
    BuildStats stats;
    const auto index = build_index(c, ConstantScorer{}, {true, 0.5}, {}, &stats);
    EXPECT_EQ(index.find("a"), nullptr);
    EXPECT_EQ(postings_of(index, "b"), (std::vector<Posting>{{0, 1.0}}));
    EXPECT_EQ(stats.capped_terms, 1u);
}

TEST(BuildIndex, ZeroImpactsAreNotStored) {
    const auto c = make_collection({"a b", "a"});
    BuildStats stats;
    const auto index = build_index(c, ExceptScorer{"b", 0, 0.0}, {true, 1.0}, {}, &stats);
    EXPECT_EQ(index.find("b"), nullptr);
    EXPECT_EQ(stats.zero_impacts, 1u);
    EXPECT_EQ(postings_of(index, "a").size(), 2u);
}

TEST(BuildIndex, ImpactOrderWithDocIdTieBreak) {
    const auto c = make_collection({"x", "x", "x", "x"});
    struct ByDoc {
        Impact operator()(const PairContext& ctx) const {
            static const double v[] = {1.0, 3.0, 1.0, 3.0};
            return Impact{v[ctx.doc.id]};
        }
        std::string name() const { return "bydoc"; }
    };
    const auto index = build_index(c, ByDoc{}, {true, 1.0});
    EXPECT_EQ(postings_of(index, "x"), (std::vector<Posting>{{1, 3.0}, {3, 3.0}, {0, 1.0}, {2, 1.0}}));
    EXPECT_EQ(index.find("x")->max_impact(), 3.0);
    EXPECT_EQ(index.impact("x", 2), 1.0);
    EXPECT_EQ(index.impact("x", 9), 0.0);
    EXPECT_EQ(index.impact("nope", 0), 0.0);
}

TEST(BuildIndex, DfCapBoundaryIsCeilOfFraction) {
    // N = 100, cap 0.05 -> limit 5: df 5 kept, df 6 dropped.
    std::vector<std::string> texts(100, "filler");
    for (int i = 0; i < 5; ++i) texts[i] += " five";
    for (int i = 0; i < 6; ++i) texts[50 + i] += " six";
    const auto c = make_collection(texts);
    const BuildConstraints cons{true, 0.05};
    EXPECT_EQ(cons.df_limit(100), 5u);
    const auto index = build_index(c, Bm25Scorer{}, cons);
    ASSERT_NE(index.find("five"), nullptr);
    EXPECT_EQ(index.find("five")->size(), 5u);
    EXPECT_EQ(index.find("six"), nullptr);
    EXPECT_EQ(index.find("filler"), nullptr);

    // Non-integral product rounds up: N = 30 -> ceil(1.5) = 2.
    EXPECT_EQ(cons.df_limit(30), 2u);
    EXPECT_EQ(cons.df_limit(1), 1u);
    EXPECT_EQ(cons.df_limit(20), 1u);
    EXPECT_EQ(cons.df_limit(21), 2u);
    EXPECT_EQ((BuildConstraints{true, 1.0}).df_limit(7), 7u);
    EXPECT_THROW((BuildConstraints{true, 0.0}).validate(), ContractViolation);
    EXPECT_THROW((BuildConstraints{true, 1.5}).validate(), ContractViolation);
}

TEST(BuildIndex, AllPairsModeScoresAbsentTerms) {
    const auto c = make_collection({"a b", "a"});
    const auto index = build_index(c, ConstantScorer{}, {false, 1.0});
    EXPECT_EQ(postings_of(index, "b"), (std::vector<Posting>{{0, 1.0}, {1, 1.0}}));
    // BM25 gives tf = 0 pairs zero impact, so all-pairs adds nothing there.
    EXPECT_EQ(build_index(c, Bm25Scorer{}, {false, 1.0}).lists(), build_index(c, Bm25Scorer{}, {true, 1.0}).lists());
}

TEST(BuildIndex, ScorerFailureNamesPair) {
    const auto c = make_collection({"a b", "a"});
    try {
        build_index(c, ThrowingScorer{});
        FAIL() << "expected BuildError";
    } catch (const BuildError& e) {
        EXPECT_NE(std::string(e.what()).find("(b, 0)"), std::string::npos) << e.what();
    }
}

TEST(BuildIndex, RequiresDenseDocIds) {
    Collection c;
    c.add_text(0, "a");
    c.add_text(5, "b");
    EXPECT_THROW(build_index(c, ConstantScorer{}), BuildError);
    EXPECT_THROW(build_index(Collection{}, ConstantScorer{}), BuildError);
}

TEST(BuildIndex, DeterministicBytes) {
    synthetic::CorpusConfig cfg;
    cfg.docs = 400;
    cfg.queries = 1;
    const auto c = synthetic::generate(cfg).collection;
    EXPECT_EQ(serialize_index(build_index(c, Bm25Scorer{})), serialize_index(build_index(c, Bm25Scorer{})));
}

TEST(BuildIndex, CapOnlyRemovesWholeLists) {
    synthetic::CorpusConfig cfg;
    cfg.docs = 500;
    cfg.queries = 1;
    const auto c = synthetic::generate(cfg).collection;
    const auto capless = build_index(c, Bm25Scorer{}, {true, 1.0});
    const auto capped = build_index(c, Bm25Scorer{}, {true, 0.05});
    const auto limit = BuildConstraints{true, 0.05}.df_limit(c.doc_count());
    std::size_t dropped = 0;
    for (const auto& [term, list] : capless.lists()) {
        if (list.size() > limit) {
            EXPECT_EQ(capped.find(term), nullptr) << term;
            ++dropped;
        } else {
            ASSERT_NE(capped.find(term), nullptr) << term;
            EXPECT_EQ(*capped.find(term), list);
        }
    }
    EXPECT_GT(dropped, 0u);
    EXPECT_EQ(capped.lists().size() + dropped, capless.lists().size());
}

TEST(IndexFromTable, ExamplesFromContract) {
    const auto c = make_collection({"a"});
    {
        ScoreTable t;
        t.insert("a", 0, 2.0);
        EXPECT_EQ(postings_of(index_from_table(c, t, {true, 1.0}), "a"), (std::vector<Posting>{{0, 2.0}}));
    }
    {
        ScoreTable t;
        t.insert("a", 0, -1.0);
        BuildStats stats;
        const auto index = index_from_table(c, t, {true, 1.0}, {}, &stats);
        EXPECT_EQ(index.find("a"), nullptr);
        EXPECT_EQ(stats.zero_impacts, 1u);
    }
    {
        ScoreTable t;
        t.insert("b", 0, 1.0);
        BuildStats stats;
        const auto index = index_from_table(c, t, {true, 1.0}, {}, &stats);
        EXPECT_EQ(index.find("b"), nullptr);
        EXPECT_EQ(stats.discarded_not_in_doc, 1u);
        // Without the constraint the stray pair is kept.
        EXPECT_EQ(postings_of(index_from_table(c, t, {false, 1.0}), "b"), (std::vector<Posting>{{0, 1.0}}));
    }
    {
        ScoreTable t;
        t.insert("a", 3, 1.0);
        EXPECT_THROW(index_from_table(c, t, {true, 1.0}), BuildError);
    }
    EXPECT_EQ(index_from_table(c, ScoreTable{}).scorer_name(), "table");
}

TEST(IndexFromTable, AgreesWithTableScorerBuild) {
    synthetic::CorpusConfig cfg;
    cfg.docs = 300;
    cfg.queries = 1;
    const auto c = synthetic::generate(cfg).collection;
    const auto table = synthetic::make_score_table(c, {3, 0.3, 2});
    for (double cap : {1.0, 0.05}) {
        BuildStats stats;
        const auto direct = index_from_table(c, table, {true, cap}, {}, &stats);
        const auto via_scorer = build_index(c, TableScorer{&table}, {true, cap});
        EXPECT_EQ(direct.lists(), via_scorer.lists()) << "cap " << cap;
        EXPECT_GT(stats.discarded_not_in_doc, 0u);
        EXPECT_GT(stats.zero_impacts, 0u);
    }
}

TEST(IndexFile, RoundTripsExactly) {
    const auto c = make_collection({"a b", "a"});
    const auto index = build_index(c, ConstantScorer{}, {true, 1.0});
    EXPECT_EQ(deserialize_index(serialize_index(index)), index);

    const auto path = (std::filesystem::temp_directory_path() / "qtind_test_roundtrip.idx").string();
    write_index(index, path);
    EXPECT_EQ(read_index(path), index);
    std::filesystem::remove(path);
}

TEST(IndexFile, QuantizedImpactsWithinOneStep) {
    const double max_impact = 7.5;
    for (double v : {3.11263, 0.0001, 7.5, 1e-9, 7.4999}) {
        const double back = dequantize_impact(quantize_impact(v, max_impact), max_impact);
        EXPECT_LE(std::abs(back - v), max_impact / 65535.0) << v;
        EXPECT_GT(back, 0.0);
    }

    synthetic::CorpusConfig cfg;
    cfg.docs = 400;
    cfg.queries = 1;
    const auto c = synthetic::generate(cfg).collection;
    const auto exact = build_index(c, Bm25Scorer{}, {true, 1.0});
    const auto quantized = build_index(c, Bm25Scorer{}, {true, 1.0}, {true});
    EXPECT_TRUE(quantized.quantized());
    EXPECT_TRUE(quantized.check().empty());
    const auto bytes = serialize_index(quantized);
    EXPECT_LT(bytes.size(), serialize_index(exact).size());
    const auto back = deserialize_index(bytes);
    EXPECT_EQ(back, quantized);
    for (const auto& [term, list] : back.lists()) {
        const auto* original = exact.find(term);
        ASSERT_NE(original, nullptr);
        EXPECT_EQ(list.max_impact(), original->max_impact());
        for (const auto& p : list.postings()) {
            EXPECT_LE(std::abs(p.impact - original->impact(p.doc)), original->max_impact() / 65535.0);
        }
    }
}

TEST(IndexFile, DistinctLoadErrors) {
    const auto c = make_collection({"a b", "a"});
    const auto good = serialize_index(build_index(c, ConstantScorer{}, {true, 1.0}));
    using Kind = IndexFileError::Kind;

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(failure_kind(bad_magic), Kind::NotIndexFile);
    EXPECT_EQ(failure_kind("hello"), Kind::NotIndexFile);

    auto bad_version = good;
    bad_version[8] = 9;
    EXPECT_EQ(failure_kind(bad_version), Kind::VersionMismatch);

    EXPECT_EQ(failure_kind(good.substr(0, good.size() - 3)), Kind::Truncated);
    EXPECT_EQ(failure_kind(good.substr(0, 12)), Kind::Truncated);

    auto flipped = good;
    flipped[good.size() - 10] ^= 0x40;
    EXPECT_EQ(failure_kind(flipped), Kind::ChecksumMismatch);

    EXPECT_EQ(failure_kind(good + "zz"), Kind::Corrupt);

    try {
        deserialize_index(bad_magic);
    } catch (const IndexFileError& e) {
        EXPECT_NE(std::string(e.what()).find("not an index file"), std::string::npos);
    }
    EXPECT_THROW(read_index("/nonexistent/file.idx"), IndexFileError);
}

TEST(IndexFile, RejectsOutOfOrderPostingsEvenWithValidChecksum) {
    const auto c = make_collection({"a", "a"});
    struct Two {
        Impact operator()(const PairContext& ctx) const { return Impact{ctx.doc.id == 0 ? 2.0 : 1.0}; }
        std::string name() const { return "two"; }
    };
    auto index = build_index(c, Two{}, {true, 1.0});
    index.replace_list(PostingList::from_raw("a", {{1, 1.0}, {0, 2.0}}));
    EXPECT_FALSE(index.check().empty());
    EXPECT_EQ(failure_kind(serialize_index(index)), IndexFileError::Kind::Corrupt);
}

TEST(PostingList, ValidatesOnConstruction) {
    EXPECT_THROW(PostingList("t", {{1, 1.0}, {1, 2.0}}), BuildError);
    EXPECT_THROW(PostingList("t", {{1, 0.0}}), BuildError);
    PostingList ok("t", {{4, 1.0}, {2, 5.0}, {3, 1.0}});
    EXPECT_EQ(ok.max_impact(), 5.0);
    EXPECT_EQ(ok.position(3), 1u);
    EXPECT_EQ(ok.position(4), 2u);
    EXPECT_FALSE(ok.position(7).has_value());
    EXPECT_EQ(PostingList{}.max_impact(), 0.0);
}
