#pragma once

#include "protoco/verdict.hpp"

#include <optional>
#include <string>

namespace protoco {

// One claim-evidence pair. The label is absent for unlabeled pools.
struct Instance {
  std::string id;
  std::string claim;
  std::string evidence;
  std::optional<Verdict> label;
  std::string domain;

  bool operator==(const Instance&) const = default;
};

// Label-free view used by the zero-shot path. There is no label member to
// read, so code taking this type cannot consult gold labels.
class UnlabeledInstance {
 public:
  explicit UnlabeledInstance(const Instance& source)
      : id_(source.id), claim_(source.claim), evidence_(source.evidence), domain_(source.domain) {}

  const std::string& id() const { return id_; }
  const std::string& claim() const { return claim_; }
  const std::string& evidence() const { return evidence_; }
  const std::string& domain() const { return domain_; }

 private:
  std::string id_;
  std::string claim_;
  std::string evidence_;
  std::string domain_;
};

}  // namespace protoco
