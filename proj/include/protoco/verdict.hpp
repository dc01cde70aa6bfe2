#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace protoco {

// Declaration order is the tie-break order used by rank classification.
enum class Verdict { Support = 0, Nei = 1, Refute = 2 };

inline constexpr std::array<Verdict, 3> kVerdicts = {Verdict::Support, Verdict::Nei, Verdict::Refute};

constexpr std::size_t index_of(Verdict v) { return static_cast<std::size_t>(v); }

std::string_view to_string(Verdict v);
// Accepts the FEVER label strings SUPPORTS / REFUTES / NEI (also
// "NOT ENOUGH INFO") and the enum names.
std::optional<Verdict> parse_verdict(std::string_view s);
// FEVER-style label string written to JSONL.
std::string_view fever_label(Verdict v);

enum class VariantRelation { Original = 0, Confirmation = 1, Uncertainty = 2, Negation = 3 };

inline constexpr std::array<VariantRelation, 4> kRelations = {
    VariantRelation::Original, VariantRelation::Confirmation, VariantRelation::Uncertainty,
    VariantRelation::Negation};

constexpr std::size_t index_of(VariantRelation r) { return static_cast<std::size_t>(r); }

std::string_view to_string(VariantRelation r);
// ORG / CON / UNC / NEG.
std::string_view short_name(VariantRelation r);

}  // namespace protoco
