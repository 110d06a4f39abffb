#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <optional>

#include "medsafe/indicator.hpp"
#include "medsafe/util.hpp"

namespace medsafe {

RuleSyntaxError::RuleSyntaxError(const std::string& message, int line, int column, const std::string& source)
    : std::runtime_error((source.empty() ? "" : source + ": ") + "line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + message),
      message_(message),
      line_(line),
      column_(column) {}

Condition Condition::on_medication(std::string set) {
  return Condition{ConditionKind::on_medication, std::move(set), 0.0, {}, 0, {}};
}
Condition Condition::has_diagnosis(std::string set) {
  return Condition{ConditionKind::has_diagnosis, std::move(set), 0.0, {}, 0, {}};
}
Condition Condition::observation_above(std::string set, double threshold, std::string unit) {
  return Condition{ConditionKind::observation_above, std::move(set), threshold, std::move(unit), 0, {}};
}
Condition Condition::missing_coprescription(std::string set, int lookback_days) {
  return Condition{ConditionKind::missing_coprescription, std::move(set), 0.0, {}, lookback_days, {}};
}
Condition Condition::missing_monitoring(std::string set, int window_days) {
  return Condition{ConditionKind::missing_monitoring, std::move(set), 0.0, {}, window_days, {}};
}
Condition Condition::all_of(std::vector<Condition> children) {
  return Condition{ConditionKind::all_of, {}, 0.0, {}, 0, std::move(children)};
}
Condition Condition::any_of(std::vector<Condition> children) {
  return Condition{ConditionKind::any_of, {}, 0.0, {}, 0, std::move(children)};
}
Condition Condition::negation(Condition child) {
  return Condition{ConditionKind::negation, {}, 0.0, {}, 0, {std::move(child)}};
}

namespace {

enum class Tok { ident, string, number, date, lparen, rparen, comma, end };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '/' || c == '%' || c == '^' || c == '.';
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      const int line = line_;
      const int col = col_;
      if (pos_ >= src_.size()) {
        out.push_back({Tok::end, "", line, col});
        return out;
      }
      const char c = src_[pos_];
      if (c == '(') {
        advance();
        out.push_back({Tok::lparen, "(", line, col});
      } else if (c == ')') {
        advance();
        out.push_back({Tok::rparen, ")", line, col});
      } else if (c == ',') {
        advance();
        out.push_back({Tok::comma, ",", line, col});
      } else if (c == '"') {
        out.push_back({Tok::string, string_literal(line, col), line, col});
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
        std::string text;
        text += advance();
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
                                      src_[pos_] == '-')) {
          text += advance();
        }
        const bool is_date = text.size() == 10 && text[4] == '-' && text[7] == '-';
        out.push_back({is_date ? Tok::date : Tok::number, text, line, col});
      } else if (ident_start(c)) {
        std::string text;
        while (pos_ < src_.size() && ident_char(src_[pos_])) text += advance();
        out.push_back({Tok::ident, text, line, col});
      } else {
        throw RuleSyntaxError(std::string("unexpected character '") + c + "'", line, col);
      }
    }
  }

 private:
  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string string_literal(int line, int col) {
    advance();  // opening quote
    std::string text;
    while (pos_ < src_.size() && src_[pos_] != '"') {
      if (src_[pos_] == '\n') break;
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) advance();
      text += advance();
    }
    if (pos_ >= src_.size() || src_[pos_] != '"') throw RuleSyntaxError("unterminated string", line, col);
    advance();
    return text;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  IndicatorRule rule() {
    IndicatorRule r;
    expect_keyword("rule");
    r.id = expect(Tok::ident, "rule id").text;
    r.title = expect(Tok::string, "quoted rule title").text;
    bool saw_continuity = false;
    bool saw_since = false;
    for (;;) {
      const auto& t = peek();
      if (t.kind == Tok::ident && t.text == "continuity") {
        if (saw_continuity) fail("duplicate 'continuity' setting", t);
        saw_continuity = true;
        next();
        const auto& n = expect(Tok::number, "continuity day count");
        r.continuity_min_days = to_int(n);
        if (r.continuity_min_days < 1) fail("continuity must be at least 1 day", n);
      } else if (t.kind == Tok::ident && t.text == "since") {
        if (saw_since) fail("duplicate 'since' setting", t);
        saw_since = true;
        next();
        const auto& d = expect(Tok::date, "date YYYY-MM-DD");
        try {
          r.since = Date::parse(d.text);
        } catch (const std::invalid_argument&) {
          fail("invalid date '" + d.text + "'", d);
        }
      } else {
        break;
      }
    }
    expect_keyword("when");
    r.condition = expression();
    if (peek().kind != Tok::end) fail("unexpected '" + peek().text + "' after condition", peek());
    return r;
  }

 private:
  Condition expression() {
    std::vector<Condition> terms{conjunction()};
    while (is_keyword("OR")) {
      next();
      terms.push_back(conjunction());
    }
    return terms.size() == 1 ? std::move(terms.front()) : Condition::any_of(std::move(terms));
  }

  Condition conjunction() {
    std::vector<Condition> terms{unary()};
    while (is_keyword("AND")) {
      next();
      terms.push_back(unary());
    }
    return terms.size() == 1 ? std::move(terms.front()) : Condition::all_of(std::move(terms));
  }

  Condition unary() {
    if (is_keyword("NOT")) {
      next();
      return Condition::negation(unary());
    }
    return primary();
  }

  Condition primary() {
    const Token open = peek();
    if (open.kind == Tok::lparen) {
      next();
      Condition inner = expression();
      close_paren(open);
      return inner;
    }
    const Token name = expect(Tok::ident, "condition");
    if (name.text == "AND" || name.text == "OR" || name.text == "NOT") fail("expected condition before '" + name.text + "'", name);
    const Token paren = expect(Tok::lparen, "'(' after " + name.text);
    const std::string set = expect(Tok::ident, "code-set name").text;
    Condition c;
    if (name.text == "ON_MEDICATION") {
      c = Condition::on_medication(set);
    } else if (name.text == "HAS_DIAGNOSIS") {
      c = Condition::has_diagnosis(set);
    } else if (name.text == "OBSERVATION_ABOVE") {
      expect(Tok::comma, "','");
      const auto& n = expect(Tok::number, "threshold");
      const double threshold = to_double(n);
      std::string unit;
      if (peek().kind == Tok::ident || peek().kind == Tok::string) unit = next().text;
      c = Condition::observation_above(set, threshold, unit);
    } else if (name.text == "MISSING_COPRESCRIPTION" || name.text == "MISSING_MONITORING") {
      expect(Tok::comma, "','");
      const auto& n = expect(Tok::number, "day count");
      const int days = to_int(n);
      if (days < 1) fail("window must be a positive number of days", n);
      c = name.text == "MISSING_COPRESCRIPTION" ? Condition::missing_coprescription(set, days)
                                                : Condition::missing_monitoring(set, days);
    } else {
      fail("unknown condition '" + name.text + "'", name);
    }
    close_paren(paren);
    return c;
  }

  void close_paren(const Token& open) {
    if (peek().kind != Tok::rparen) {
      fail("expected ')' to close '(' at line " + std::to_string(open.line) + ", column " +
               std::to_string(open.column) + (peek().kind == Tok::end ? ", found end of input" : ", found '" + peek().text + "'"),
           peek());
    }
    next();
  }

  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  bool is_keyword(std::string_view kw) const { return peek().kind == Tok::ident && peek().text == kw; }

  void expect_keyword(std::string_view kw) {
    if (!is_keyword(kw)) fail("expected '" + std::string(kw) + "'", peek());
    next();
  }

  const Token& expect(Tok kind, const std::string& what) {
    if (peek().kind != kind) {
      fail("expected " + what + (peek().kind == Tok::end ? ", found end of input" : ", found '" + peek().text + "'"), peek());
    }
    return next();
  }

  [[noreturn]] static void fail(const std::string& msg, const Token& at) { throw RuleSyntaxError(msg, at.line, at.column); }

  static int to_int(const Token& t) {
    int v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size()) fail("expected integer, found '" + t.text + "'", t);
    return v;
  }

  static double to_double(const Token& t) {
    double v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size()) fail("expected number, found '" + t.text + "'", t);
    return v;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

std::string_view leaf_name(ConditionKind k) {
  switch (k) {
    case ConditionKind::on_medication: return "ON_MEDICATION";
    case ConditionKind::has_diagnosis: return "HAS_DIAGNOSIS";
    case ConditionKind::observation_above: return "OBSERVATION_ABOVE";
    case ConditionKind::missing_coprescription: return "MISSING_COPRESCRIPTION";
    case ConditionKind::missing_monitoring: return "MISSING_MONITORING";
    default: return "";
  }
}

bool bare_word(std::string_view s) {
  return !s.empty() && ident_start(s.front()) && std::all_of(s.begin(), s.end(), ident_char) && s != "AND" &&
         s != "OR" && s != "NOT";
}

// Precedence: OR (1) < AND (2) < NOT/leaf (3). A child is parenthesised when
// its precedence does not exceed the parent's, which also keeps nested nodes
// of the same kind distinct on re-parse.
int precedence(const Condition& c) {
  switch (c.kind) {
    case ConditionKind::any_of: return 1;
    case ConditionKind::all_of: return 2;
    default: return 3;
  }
}

void print(const Condition& c, std::string& out) {
  const auto child = [&](const Condition& ch, int parent_prec) {
    const bool paren = precedence(ch) <= parent_prec && !ch.is_leaf() && ch.kind != ConditionKind::negation;
    if (paren) out += '(';
    print(ch, out);
    if (paren) out += ')';
  };
  switch (c.kind) {
    case ConditionKind::all_of:
    case ConditionKind::any_of: {
      const char* op = c.kind == ConditionKind::all_of ? " AND " : " OR ";
      for (std::size_t i = 0; i < c.children.size(); ++i) {
        if (i) out += op;
        child(c.children[i], precedence(c));
      }
      return;
    }
    case ConditionKind::negation:
      out += "NOT ";
      child(c.children.front(), 2);
      return;
    default:
      break;
  }
  out += leaf_name(c.kind);
  out += '(';
  out += c.code_set;
  if (c.kind == ConditionKind::observation_above) {
    out += ", " + format_number(c.threshold);
    if (!c.unit.empty()) out += " " + (bare_word(c.unit) ? c.unit : "\"" + c.unit + "\"");
  } else if (c.kind == ConditionKind::missing_coprescription || c.kind == ConditionKind::missing_monitoring) {
    out += ", " + std::to_string(c.window_days);
  }
  out += ')';
}

void check_condition(const Condition& c, const CodeDictionary& dict) {
  if (c.is_leaf()) {
    if (!dict.has_set(c.code_set)) throw RuleError("unknown code set '" + c.code_set + "'");
    if (dict.set(c.code_set).empty()) throw RuleError("code set '" + c.code_set + "' is empty");
    if ((c.kind == ConditionKind::missing_coprescription || c.kind == ConditionKind::missing_monitoring) &&
        c.window_days < 1) {
      throw RuleError("window must be positive in " + std::string(leaf_name(c.kind)));
    }
    return;
  }
  if (c.children.empty()) throw RuleError("composite condition has no children");
  if (c.kind == ConditionKind::negation && c.children.size() != 1) throw RuleError("NOT takes exactly one operand");
  for (const auto& ch : c.children) check_condition(ch, dict);
}

}  // namespace

IndicatorRule parse_rule(std::string_view text) { return Parser(Lexer(text).run()).rule(); }

IndicatorRule parse_rule(std::string_view text, const CodeDictionary& dict) {
  auto rule = parse_rule(text);
  check_rule(rule, dict);
  return rule;
}

void check_rule(const IndicatorRule& rule, const CodeDictionary& dict) {
  if (rule.continuity_min_days < 1) throw RuleError("rule " + rule.id + ": continuity must be at least 1 day");
  try {
    check_condition(rule.condition, dict);
  } catch (const RuleError& e) {
    throw RuleError("rule " + rule.id + ": " + e.what());
  }
}

std::string to_expression(const Condition& condition) {
  std::string out;
  print(condition, out);
  return out;
}

std::string to_source(const IndicatorRule& rule) {
  std::string out = "rule " + rule.id + " \"" + rule.title + "\"\n";
  out += "since " + rule.since.iso() + "\n";
  out += "continuity " + std::to_string(rule.continuity_min_days) + "\n";
  out += "when " + to_expression(rule.condition) + "\n";
  return out;
}

std::vector<IndicatorRule> load_rules(const std::string& dir, const CodeDictionary& dict) {
  namespace fs = std::filesystem;
  std::vector<IndicatorRule> rules;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".rule") continue;
    try {
      rules.push_back(parse_rule(read_file(entry.path().string()), dict));
    } catch (const RuleSyntaxError& e) {
      throw RuleSyntaxError(e.message(), e.line(), e.column(), entry.path().filename().string());
    } catch (const RuleError& e) {
      throw RuleError(entry.path().filename().string() + ": " + e.what());
    }
  }
  std::sort(rules.begin(), rules.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < rules.size(); ++i) {
    if (rules[i].id == rules[i - 1].id) throw RuleError("duplicate rule id " + rules[i].id);
  }
  return rules;
}

}  // namespace medsafe
