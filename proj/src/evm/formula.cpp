#include "evm/formula.hpp"

#include <algorithm>
#include <cctype>

#include "evm/error.hpp"

namespace evm {

namespace {

struct PositionedTerm {
  Term term;
  std::size_t sequence = 0;  // generation order, i.e. first appearance in the text
};

struct TermList {
  std::vector<PositionedTerm> terms;
};

enum class TokenKind { name, number, tilde, plus, minus, colon, star, end, unsupported };

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t pos;
};

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

[[noreturn]] void syntax_error(const std::string& message, std::size_t pos) {
  throw Error(ErrorCode::parse_error, message + " at position " + std::to_string(pos), {{"position", pos}});
}

[[noreturn]] void unsupported_error(const std::string& what, std::size_t pos) {
  throw Error(ErrorCode::unsupported, "unsupported operator '" + what + "' at position " + std::to_string(pos),
              {{"position", pos}, {"operator", what}});
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (is_name_start(c)) {
      while (i < text.size() && is_name_char(text[i])) ++i;
      std::string name(text.substr(start, i - start));
      out.push_back({name == "." ? TokenKind::unsupported : TokenKind::name, name, start});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
      out.push_back({TokenKind::number, std::string(text.substr(start, i - start)), start});
      continue;
    }
    if (c == '`') {
      auto close = text.find('`', i + 1);
      if (close == std::string_view::npos) syntax_error("unterminated quoted name", start);
      if (close == i + 1) syntax_error("empty quoted name", start);
      out.push_back({TokenKind::name, std::string(text.substr(i + 1, close - i - 1)), start});
      i = close + 1;
      continue;
    }
    switch (c) {
      case '~': out.push_back({TokenKind::tilde, "~", start}); break;
      case '+': out.push_back({TokenKind::plus, "+", start}); break;
      case '-': out.push_back({TokenKind::minus, "-", start}); break;
      case ':': out.push_back({TokenKind::colon, ":", start}); break;
      case '*': out.push_back({TokenKind::star, "*", start}); break;
      case '/':
      case '|':
      case '^':
      case '(':
      case ')':
      case '%': out.push_back({TokenKind::unsupported, std::string(1, c), start}); break;
      default: syntax_error(std::string("unexpected character '") + c + "'", start);
    }
    ++i;
  }
  out.push_back({TokenKind::end, "", text.size()});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  FormulaAST parse(bool expects_response) {
    FormulaAST ast;
    auto tilde = std::find_if(tokens_.begin(), tokens_.end(), [](const Token& t) { return t.kind == TokenKind::tilde; });
    if (tilde != tokens_.end()) {
      if (tilde != tokens_.begin()) {
        const Token& first = peek();
        if (first.kind == TokenKind::unsupported) unsupported_error(first.text, first.pos);
        if (first.kind != TokenKind::name) syntax_error("expected response variable", first.pos);
        ast.response = first.text;
        advance();
        if (peek().kind != TokenKind::tilde) {
          const Token& t = peek();
          if (t.kind == TokenKind::unsupported) unsupported_error(t.text, t.pos);
          syntax_error("expected '~' after response", t.pos);
        }
      }
      advance();  // '~'
    }
    if (expects_response && !ast.response)
      syntax_error("location formula needs a response, e.g. 'y ~ x'", tilde == tokens_.end() ? 0 : tilde->pos);
    if (!expects_response && ast.response)
      syntax_error("scale formula must not have a response", tokens_.front().pos);

    parse_rhs(ast);
    return ast;
  }

 private:
  const Token& peek() const { return tokens_[index_]; }
  const Token& advance() { return tokens_[index_++]; }

  void parse_rhs(FormulaAST& ast) {
    std::vector<PositionedTerm> collected;
    bool expect_item = true;
    bool negate = false;
    if (peek().kind == TokenKind::end) syntax_error("empty right-hand side", peek().pos);
    if (peek().kind == TokenKind::minus) {
      negate = true;
      advance();
    }
    while (true) {
      const Token& t = peek();
      if (expect_item) {
        if (t.kind == TokenKind::number) {
          advance();
          if (t.text != "0" && t.text != "1") syntax_error("only 0 and 1 are allowed as constants", t.pos);
          ensure_not_operand(t);
          bool keep = t.text == "1";
          ast.intercept = negate ? !keep : keep;
        } else {
          if (negate) unsupported_error("-" + (t.kind == TokenKind::name ? t.text : std::string()), t.pos);
          auto list = parse_product();
          for (auto& pt : list.terms) collected.push_back(std::move(pt));
        }
        expect_item = false;
        continue;
      }
      if (t.kind == TokenKind::end) break;
      if (t.kind == TokenKind::plus || t.kind == TokenKind::minus) {
        negate = t.kind == TokenKind::minus;
        advance();
        if (peek().kind == TokenKind::end) syntax_error("expected a term", peek().pos);
        expect_item = true;
        continue;
      }
      if (t.kind == TokenKind::unsupported) unsupported_error(t.text, t.pos);
      if (t.kind == TokenKind::tilde) syntax_error("unexpected '~'", t.pos);
      syntax_error("unexpected '" + t.text + "'", t.pos);
    }

    std::stable_sort(collected.begin(), collected.end(), [](const PositionedTerm& a, const PositionedTerm& b) {
      if (a.term.order() != b.term.order()) return a.term.order() < b.term.order();
      return a.sequence < b.sequence;
    });
    for (auto& pt : collected) {
      auto dup = std::find_if(ast.terms.begin(), ast.terms.end(), [&](const Term& t) { return t.same_set(pt.term); });
      if (dup != ast.terms.end()) {
        ast.warnings.push_back("duplicate term '" + pt.term.label() + "' removed");
        continue;
      }
      ast.terms.push_back(std::move(pt.term));
    }
  }

  // A constant may not take part in ':' or '*'.
  void ensure_not_operand(const Token& constant) {
    auto k = peek().kind;
    if (k == TokenKind::colon || k == TokenKind::star)
      syntax_error("constant '" + constant.text + "' cannot be part of an interaction", constant.pos);
  }

  // product := interaction ('*' interaction)*
  TermList parse_product() {
    TermList acc = parse_interaction();
    while (peek().kind == TokenKind::star) {
      advance();
      TermList rhs = parse_interaction();
      TermList crossed = cross(acc, rhs);
      TermList merged = acc;
      for (auto& t : rhs.terms) merged.terms.push_back(t);
      for (auto& t : crossed.terms) merged.terms.push_back(t);
      acc = std::move(merged);
    }
    return acc;
  }

  // interaction := name (':' name)*
  TermList parse_interaction() {
    TermList acc = parse_factor();
    while (peek().kind == TokenKind::colon) {
      advance();
      acc = cross(acc, parse_factor());
    }
    return acc;
  }

  TermList parse_factor() {
    const Token& t = peek();
    if (t.kind == TokenKind::name) {
      advance();
      if (peek().kind == TokenKind::unsupported && peek().text == "(")
        throw Error(ErrorCode::unsupported,
                    "unsupported function call '" + t.text + "(...)' at position " + std::to_string(t.pos) +
                        "; apply transforms to the dataset instead",
                    {{"position", t.pos}, {"operator", t.text + "()"}});
      TermList out;
      out.terms.push_back({Term{{t.text}}, next_sequence_++});
      return out;
    }
    if (t.kind == TokenKind::unsupported) unsupported_error(t.text, t.pos);
    if (t.kind == TokenKind::number) syntax_error("constant '" + t.text + "' cannot be part of an interaction", t.pos);
    if (t.kind == TokenKind::end) syntax_error("expected a variable name", t.pos);
    syntax_error("expected a variable name, found '" + t.text + "'", t.pos);
  }

  TermList cross(const TermList& a, const TermList& b) {
    TermList out;
    for (const auto& x : a.terms) {
      for (const auto& y : b.terms) {
        Term t = x.term;
        for (const auto& v : y.term.variables)
          if (std::find(t.variables.begin(), t.variables.end(), v) == t.variables.end()) t.variables.push_back(v);
        out.terms.push_back({std::move(t), next_sequence_++});
      }
    }
    return out;
  }

  std::vector<Token> tokens_;
  std::size_t index_ = 0;
  std::size_t next_sequence_ = 0;
};

std::string quote_name(const std::string& name) {
  bool plain = !name.empty() && is_name_start(name.front()) &&
               std::all_of(name.begin(), name.end(), [](char c) { return is_name_char(c); });
  return plain ? name : "`" + name + "`";
}

std::string describe_family(FamilyKind family) {
  switch (family) {
    case FamilyKind::normal: return "is normally distributed";
    case FamilyKind::log_normal: return "is log-normally distributed";
    case FamilyKind::logit_normal: return "is logit-normally distributed";
    case FamilyKind::logistic: return "is a binary outcome with a logistic link";
    case FamilyKind::poisson: return "is Poisson distributed";
    case FamilyKind::negative_binomial: return "is negative binomially distributed";
  }
  return "";
}

std::string join_and(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

void describe_submodel(const FormulaAST& f, const std::string& quantity, std::vector<std::string>& out) {
  if (f.terms.empty()) {
    out.push_back(f.intercept ? "its " + quantity + " is constant" : "its " + quantity + " is fixed by the link at zero");
    return;
  }
  if (!f.intercept) out.push_back("its " + quantity + " has no intercept");
  for (const auto& t : f.terms) {
    if (t.order() == 1) {
      out.push_back("its " + quantity + " depends on " + t.variables[0]);
    } else {
      std::vector<std::string> rest(t.variables.begin() + 1, t.variables.end());
      out.push_back("the effect of " + t.variables[0] + " on the " + quantity + " depends on " + join_and(rest));
    }
  }
}

}  // namespace

bool Term::same_set(const Term& other) const {
  if (variables.size() != other.variables.size()) return false;
  return std::all_of(variables.begin(), variables.end(), [&](const std::string& v) {
    return std::find(other.variables.begin(), other.variables.end(), v) != other.variables.end();
  });
}

std::string Term::label() const {
  std::string out;
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (i) out += ':';
    out += variables[i];
  }
  return out;
}

std::vector<std::string> FormulaAST::variables() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  if (response) add(*response);
  for (const auto& t : terms)
    for (const auto& v : t.variables) add(v);
  return out;
}

FormulaAST parse_formula(std::string_view text, bool expects_response) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) {
    if (expects_response) throw Error(ErrorCode::parse_error, "empty formula", {{"position", 0}});
    return FormulaAST{};
  }
  return Parser(tokenize(text)).parse(expects_response);
}

std::string to_string(const FormulaAST& ast) {
  std::string out;
  if (ast.response) out += quote_name(*ast.response) + " ";
  out += "~ ";
  std::vector<std::string> parts;
  parts.push_back(ast.intercept ? "1" : "0");
  for (const auto& t : ast.terms) {
    std::string s;
    for (std::size_t i = 0; i < t.variables.size(); ++i) {
      if (i) s += ":";
      s += quote_name(t.variables[i]);
    }
    parts.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += " + ";
    out += parts[i];
  }
  return out;
}

std::optional<FormulaAST> ModelSpec::effective_scale() const {
  if (!has_scale(family)) return std::nullopt;
  return scale ? *scale : FormulaAST{};
}

ModelSpec make_model_spec(FamilyKind family, std::string_view location, std::string_view scale, std::string label) {
  ModelSpec spec;
  spec.family = family;
  spec.location = parse_formula(location, true);
  if (scale.find_first_not_of(" \t\r\n") != std::string_view::npos) spec.scale = parse_formula(scale, false);
  if (label.empty()) {
    label = std::string(location);
    if (spec.scale) label += " | " + std::string(scale);
  }
  spec.label = std::move(label);
  return spec;
}

std::vector<Binding> validate_spec(const ModelSpec& spec, const Dataset& d) {
  if (spec.scale && !has_scale(spec.family))
    throw Error(ErrorCode::unsupported,
                "family has no scale parameter: " + std::string(to_string(spec.family)) +
                    " does not accept a scale formula",
                {{"family", std::string(to_string(spec.family))}});
  std::vector<Binding> out;
  auto bind = [&](const std::string& v) {
    if (std::any_of(out.begin(), out.end(), [&](const Binding& b) { return b.variable == v; })) return;
    out.push_back({v, d.column(v).kind()});
  };
  for (const auto& v : spec.location.variables()) bind(v);
  if (spec.scale)
    for (const auto& v : spec.scale->variables()) bind(v);
  return out;
}

std::vector<std::string> describe_model(const ModelSpec& spec) {
  std::vector<std::string> out;
  std::string outcome = spec.location.response.value_or("the outcome");
  out.push_back(outcome + " " + describe_family(spec.family));
  std::string location_quantity = spec.family == FamilyKind::logistic ? "probability" : "mean";
  describe_submodel(spec.location, location_quantity, out);
  if (has_scale(spec.family)) {
    std::string scale_quantity = spec.family == FamilyKind::negative_binomial ? "dispersion" : "variance";
    describe_submodel(spec.effective_scale().value(), scale_quantity, out);
  }
  return out;
}

}  // namespace evm
