#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evm/dataset.hpp"
#include "evm/family.hpp"

namespace evm {

// One model term: a main effect (one variable) or an interaction (several).
struct Term {
  std::vector<std::string> variables;

  std::size_t order() const { return variables.size(); }
  bool same_set(const Term& other) const;
  std::string label() const;  // "a" or "a:b"

  friend bool operator==(const Term&, const Term&) = default;
};

struct FormulaAST {
  std::optional<std::string> response;
  bool intercept = true;
  std::vector<Term> terms;
  // Non-fatal notes (e.g. deduplicated terms). Not part of structural equality.
  std::vector<std::string> warnings;

  std::vector<std::string> variables() const;

  friend bool operator==(const FormulaAST& a, const FormulaAST& b) {
    return a.response == b.response && a.intercept == b.intercept && a.terms == b.terms;
  }
};

// Grammar: [response] '~' rhs | rhs. rhs terms are joined by '+'; ':' forms an
// interaction and binds tighter than '*', which expands a*b to a + b + a:b.
// '1' keeps and '0' / '-1' drops the intercept. Names are identifiers or
// backtick-quoted. Errors carry the character position in detail["position"].
FormulaAST parse_formula(std::string_view text, bool expects_response);

// Canonical text form; parse(to_string(ast)) reproduces ast.
std::string to_string(const FormulaAST& ast);

struct ModelSpec {
  FamilyKind family = FamilyKind::normal;
  FormulaAST location;
  std::optional<FormulaAST> scale;
  std::string label;

  // Scale formula used for fitting: the supplied one, or intercept-only for
  // scale-bearing families.
  std::optional<FormulaAST> effective_scale() const;
};

// Parses both formulas. An empty scale text leaves scale unset (intercept-only
// for families with a scale parameter). The label defaults to the formula text.
ModelSpec make_model_spec(FamilyKind family, std::string_view location, std::string_view scale = {},
                          std::string label = {});

struct Binding {
  std::string variable;
  ColumnKind kind;
  friend bool operator==(const Binding&, const Binding&) = default;
};

// Resolves every referenced variable against the dataset.
std::vector<Binding> validate_spec(const ModelSpec& spec, const Dataset& d);

std::vector<std::string> describe_model(const ModelSpec& spec);

}  // namespace evm
