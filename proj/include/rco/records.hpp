// SPDX-License-Identifier: Apache-2.0
//
// Line-delimited record files. One JSON object per line; keys are emitted in
// the declaration order of the record struct and optional fields are omitted
// when absent. write_records sorts by (prompt_id, index fields) so equal record
// sets always produce identical bytes.
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rco/types.hpp"

namespace rco {

/// Parse a whole file body. Throws ParseError (with 1-based line) on malformed
/// lines and ValidationError on invariant or uniqueness violations.
template <class Record>
std::vector<Record> parse_records(std::string_view text);

/// Canonical serialization: sorted, one object per line, trailing newline per
/// record. Validates every record first.
template <class Record>
std::string serialize_records(std::vector<Record> records);

template <class Record>
std::vector<Record> load_records(const std::filesystem::path& path);

template <class Record>
void write_records(std::vector<Record> records, const std::filesystem::path& path);

/// Single-record invariants (not cross-record ones). Throws ValidationError.
void validate(const PromptRecord& r);
void validate(const ResponseRecord& r);
void validate(const CritiqueRecord& r);
void validate(const RefinementRecord& r);
void validate(const JudgmentRecord& r);
void validate(const RatingRecord& r);
void validate(const RewardRecord& r);
void validate(const DpcoPair& r);

/// Cross-file reference check. Any span may be empty. Returns one message per
/// dangling reference; empty means consistent.
struct RecordSet {
  std::span<const PromptRecord> prompts;
  std::span<const ResponseRecord> responses;
  std::span<const CritiqueRecord> critiques;
  std::span<const RefinementRecord> refinements;
  std::span<const JudgmentRecord> judgments;
};
std::vector<std::string> dangling_references(const RecordSet& set);

/// Throws ValidationError listing every dangling reference.
void validate_references(const RecordSet& set);

/// Checks index ≤ N for critiques and refinement_index ≤ M for refinements.
void validate_index_limits(std::span<const CritiqueRecord> critiques,
                           std::span<const RefinementRecord> refinements, int n_critiques,
                           int m_refinements);

/// Reads a whole file into memory. Throws IoError.
std::string read_file(const std::filesystem::path& path);
/// Writes bytes, creating parent directories. Throws IoError.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace rco
