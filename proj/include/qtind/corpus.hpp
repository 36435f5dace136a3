// Copyright 2026 The qtind Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qtind/error.hpp"

namespace qtind {

using DocId = std::uint32_t;
using TermId = std::uint32_t;

/// Splits `text` into lowercase terms. Every character that is not an ASCII
/// letter or digit separates terms; bytes >= 0x80 (UTF-8 sequences) are kept
/// inside terms so accented words stay whole. Empty fragments are dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> terms;
    std::string current;
    for (char ch : text) {
        auto byte = static_cast<unsigned char>(ch);
        if (byte >= 0x80 || std::isalnum(byte)) {
            current.push_back(static_cast<char>(std::tolower(byte)));
        } else if (!current.empty()) {
            terms.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

/// Interned term strings. Ids are assigned densely in first-seen order.
class Vocabulary {
public:
    TermId intern(std::string_view term) {
        auto it = ids_.find(std::string(term));
        if (it != ids_.end()) return it->second;
        auto id = static_cast<TermId>(terms_.size());
        terms_.emplace_back(term);
        ids_.emplace(terms_.back(), id);
        return id;
    }

    std::optional<TermId> find(std::string_view term) const {
        auto it = ids_.find(std::string(term));
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& term(TermId id) const { return terms_.at(id); }
    std::size_t size() const noexcept { return terms_.size(); }

private:
    std::vector<std::string> terms_;
    std::unordered_map<std::string, TermId> ids_;
};

struct Document {
    DocId id = 0;
    std::vector<TermId> terms;

    std::size_t length() const noexcept { return terms.size(); }
};

/// A set of tokenized passages with length statistics. Immutable once loaded.
class Collection {
public:
    /// Adds a document from already-tokenized terms. Throws LoadError on a
    /// duplicate id.
    void add(DocId id, std::span<const std::string> terms) {
        if (index_.contains(id)) throw LoadError("duplicate doc_id " + std::to_string(id));
        Document doc{id, {}};
        doc.terms.reserve(terms.size());
        for (const auto& t : terms) doc.terms.push_back(vocabulary_.intern(t));
        total_length_ += doc.terms.size();
        index_.emplace(id, documents_.size());
        documents_.push_back(std::move(doc));
    }

    void add_text(DocId id, std::string_view text) {
        auto terms = tokenize(text);
        add(id, terms);
    }

    std::size_t doc_count() const noexcept { return documents_.size(); }

    /// Mean of per-document term counts; 0 for an empty collection.
    double avg_doc_len() const noexcept {
        if (documents_.empty()) return 0.0;
        return static_cast<double>(total_length_) / static_cast<double>(documents_.size());
    }

    std::uint64_t total_length() const noexcept { return total_length_; }

    const Document* find(DocId id) const {
        auto it = index_.find(id);
        return it == index_.end() ? nullptr : &documents_[it->second];
    }

    std::span<const Document> documents() const noexcept { return documents_; }
    const Vocabulary& vocabulary() const noexcept { return vocabulary_; }

    std::vector<std::string> terms_of(const Document& doc) const {
        std::vector<std::string> out;
        out.reserve(doc.terms.size());
        for (TermId t : doc.terms) out.push_back(vocabulary_.term(t));
        return out;
    }

private:
    std::vector<Document> documents_;
    std::unordered_map<DocId, std::size_t> index_;
    Vocabulary vocabulary_;
    std::uint64_t total_length_ = 0;
};

/// A query keeps duplicate terms: evaluation treats it as a multiset.
struct Query {
    std::string id;
    std::vector<std::string> terms;
};

/// query_id -> relevant doc ids. Only grades >= 1 are kept.
using Qrels = std::map<std::string, std::set<DocId>>;

/// One query's candidate documents in file order.
struct CandidateSet {
    std::string query_id;
    std::vector<DocId> docs;
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) fields.push_back(line.substr(start, i - start));
    }
    return fields;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return value;
}

inline std::optional<double> parse_double(std::string_view s) {
    // from_chars for double is available in libstdc++ 11.
    double value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return value;
}

inline bool getline_clean(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path);
    return in;
}

inline DocId parse_doc_id(std::string_view field, const std::string& name, std::size_t line_no) {
    auto id = parse_int<DocId>(field);
    if (!id) throw LoadError(name, line_no, "invalid doc_id '" + std::string(field) + "'");
    return *id;
}

}  // namespace detail

/// Reads `doc_id<TAB>passage_text` lines. Errors name the offending line.
inline Collection read_collection(std::istream& in, const std::string& name = "<collection>") {
    Collection collection;
    std::string line;
    std::size_t line_no = 0;
    while (detail::getline_clean(in, line)) {
        ++line_no;
        auto fields = detail::split(line, '\t');
        if (fields.size() != 2) {
            throw LoadError(name, line_no,
                            "expected 2 tab-separated fields, got " + std::to_string(fields.size()));
        }
        DocId id = detail::parse_doc_id(fields[0], name, line_no);
        if (collection.find(id)) {
            throw LoadError(name, line_no, "duplicate doc_id " + std::to_string(id));
        }
        collection.add_text(id, fields[1]);
    }
    if (collection.doc_count() == 0) throw LoadError(name + ": collection is empty");
    return collection;
}

inline Collection load_collection(const std::string& path) {
    auto in = detail::open_input(path);
    return read_collection(in, path);
}

/// Writes documents in stored order as `doc_id<TAB>terms joined by spaces`.
inline void write_collection(const Collection& collection, std::ostream& out) {
    for (const auto& doc : collection.documents()) {
        out << doc.id << '\t';
        for (std::size_t i = 0; i < doc.terms.size(); ++i) {
            if (i) out << ' ';
            out << collection.vocabulary().term(doc.terms[i]);
        }
        out << '\n';
    }
}

inline std::vector<Query> read_queries(std::istream& in, const std::string& name = "<queries>") {
    std::vector<Query> queries;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (detail::getline_clean(in, line)) {
        ++line_no;
        auto fields = detail::split(line, '\t');
        if (fields.size() != 2 || fields[0].empty()) {
            throw LoadError(name, line_no, "expected query_id<TAB>text");
        }
        std::string id(fields[0]);
        if (!seen.insert(id).second) throw LoadError(name, line_no, "duplicate query_id " + id);
        queries.push_back(Query{std::move(id), tokenize(fields[1])});
    }
    return queries;
}

inline std::vector<Query> load_queries(const std::string& path) {
    auto in = detail::open_input(path);
    return read_queries(in, path);
}

/// TREC qrels: `query_id 0 doc_id grade`. Grade 0 rows are ignored.
inline Qrels read_qrels(std::istream& in, const std::string& name = "<qrels>") {
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (detail::getline_clean(in, line)) {
        ++line_no;
        auto fields = detail::split_ws(line);
        if (fields.empty()) continue;
        if (fields.size() != 4) throw LoadError(name, line_no, "expected 4 whitespace-separated fields");
        DocId doc = detail::parse_doc_id(fields[2], name, line_no);
        auto grade = detail::parse_int<int>(fields[3]);
        if (!grade) throw LoadError(name, line_no, "invalid grade '" + std::string(fields[3]) + "'");
        if (*grade >= 1) qrels[std::string(fields[0])].insert(doc);
    }
    return qrels;
}

inline Qrels load_qrels(const std::string& path) {
    auto in = detail::open_input(path);
    return read_qrels(in, path);
}

/// Top-1000 file: `query_id<TAB>doc_id<TAB>query_text<TAB>passage_text`.
/// Only the first two fields are read. Sets come back in first-seen order.
inline std::vector<CandidateSet> read_candidates(std::istream& in,
                                                 const std::string& name = "<candidates>") {
    std::vector<CandidateSet> sets;
    std::unordered_map<std::string, std::size_t> position;
    std::unordered_map<std::string, std::set<DocId>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (detail::getline_clean(in, line)) {
        ++line_no;
        auto fields = detail::split(line, '\t');
        if (fields.size() < 2 || fields[0].empty()) {
            throw LoadError(name, line_no, "expected query_id<TAB>doc_id[...]");
        }
        std::string qid(fields[0]);
        DocId doc = detail::parse_doc_id(fields[1], name, line_no);
        if (!seen[qid].insert(doc).second) {
            throw LoadError(name, line_no,
                            "duplicate candidate " + std::to_string(doc) + " for query " + qid);
        }
        auto [it, inserted] = position.try_emplace(qid, sets.size());
        if (inserted) sets.push_back(CandidateSet{qid, {}});
        sets[it->second].docs.push_back(doc);
    }
    return sets;
}

inline std::vector<CandidateSet> load_candidates(const std::string& path) {
    auto in = detail::open_input(path);
    return read_candidates(in, path);
}

}  // namespace qtind
