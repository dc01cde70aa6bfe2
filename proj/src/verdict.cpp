#include "protoco/verdict.hpp"

namespace protoco {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Support: return "Support";
    case Verdict::Nei: return "NEI";
    case Verdict::Refute: return "Refute";
  }
  return "?";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "SUPPORTS" || s == "Support") return Verdict::Support;
  if (s == "REFUTES" || s == "Refute") return Verdict::Refute;
  if (s == "NEI" || s == "NOT ENOUGH INFO") return Verdict::Nei;
  return std::nullopt;
}

std::string_view fever_label(Verdict v) {
  switch (v) {
    case Verdict::Support: return "SUPPORTS";
    case Verdict::Nei: return "NEI";
    case Verdict::Refute: return "REFUTES";
  }
  return "?";
}

std::string_view to_string(VariantRelation r) {
  switch (r) {
    case VariantRelation::Original: return "Original";
    case VariantRelation::Confirmation: return "Confirmation";
    case VariantRelation::Uncertainty: return "Uncertainty";
    case VariantRelation::Negation: return "Negation";
  }
  return "?";
}

std::string_view short_name(VariantRelation r) {
  switch (r) {
    case VariantRelation::Original: return "ORG";
    case VariantRelation::Confirmation: return "CON";
    case VariantRelation::Uncertainty: return "UNC";
    case VariantRelation::Negation: return "NEG";
  }
  return "?";
}

}  // namespace protoco
