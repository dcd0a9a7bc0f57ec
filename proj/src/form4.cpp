#include "insider/form4.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <set>
#include <sstream>

#include "insider/errors.hpp"
#include "insider/io_util.hpp"

namespace insider {

namespace {

// ---------------------------------------------------------------------------
// Minimal XML reader: elements, attributes, text, comments, CDATA, the five
// predefined entities. Enough for SEC ownership documents; anything it cannot
// parse raises MalformedXml.
// ---------------------------------------------------------------------------

struct XmlNode {
  std::string name;
  std::string text;  // concatenated direct character data, trimmed
  std::vector<std::unique_ptr<XmlNode>> children;

  const XmlNode* find_descendant(const std::string& wanted) const {
    for (const auto& c : children) {
      if (c->name == wanted) return c.get();
      if (const XmlNode* hit = c->find_descendant(wanted)) return hit;
    }
    return nullptr;
  }

  void collect_descendants(const std::string& wanted,
                           std::vector<const XmlNode*>& out) const {
    for (const auto& c : children) {
      if (c->name == wanted) out.push_back(c.get());
      c->collect_descendants(wanted, out);
    }
  }
};

class XmlParser {
 public:
  explicit XmlParser(const std::string& text) : s_(text) {}

  std::unique_ptr<XmlNode> parse() {
    skip_misc();
    auto root = parse_element();
    skip_misc();
    if (pos_ != s_.size()) fail("trailing content after the root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw MalformedXml(why + " at offset " + std::to_string(pos_));
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }
  bool starts_with(const char* lit) const { return s_.compare(pos_, std::strlen(lit), lit) == 0; }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  void skip_until(const char* lit, const char* what) {
    const auto hit = s_.find(lit, pos_);
    if (hit == std::string::npos) fail(std::string("unterminated ") + what);
    pos_ = hit + std::strlen(lit);
  }

  // whitespace, <?...?>, <!--...-->, <!DOCTYPE...>
  void skip_misc() {
    for (;;) {
      skip_ws();
      if (starts_with("<?")) {
        skip_until("?>", "processing instruction");
      } else if (starts_with("<!--")) {
        skip_until("-->", "comment");
      } else if (starts_with("<!")) {
        skip_until(">", "declaration");
      } else {
        return;
      }
    }
  }

  std::string parse_name() {
    const std::size_t start = pos_;
    while (!eof() &&
           (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
            peek() == '-' || peek() == ':' || peek() == '.'))
      ++pos_;
    if (pos_ == start) fail("expected a name");
    return s_.substr(start, pos_ - start);
  }

  void decode_entity(std::string& out) {
    const auto end = s_.find(';', pos_);
    if (end == std::string::npos || end - pos_ > 8) fail("bad entity reference");
    const std::string ent = s_.substr(pos_ + 1, end - pos_ - 1);
    if (ent == "amp") out += '&';
    else if (ent == "lt") out += '<';
    else if (ent == "gt") out += '>';
    else if (ent == "quot") out += '"';
    else if (ent == "apos") out += '\'';
    else if (!ent.empty() && ent[0] == '#') {
      const long code = std::strtol(ent.c_str() + (ent[1] == 'x' ? 2 : 1), nullptr,
                                    ent[1] == 'x' ? 16 : 10);
      if (code <= 0 || code > 127) fail("unsupported character reference");
      out += static_cast<char>(code);
    } else {
      fail("unknown entity '&" + ent + ";'");
    }
    pos_ = end + 1;
  }

  void parse_attributes() {
    // attribute values are read and discarded; ownership documents carry the
    // payload in element text
    for (;;) {
      skip_ws();
      if (eof()) fail("unterminated start tag");
      if (peek() == '>' || peek() == '/') return;
      parse_name();
      skip_ws();
      if (eof() || peek() != '=') fail("attribute without '='");
      ++pos_;
      skip_ws();
      if (eof() || (peek() != '"' && peek() != '\'')) fail("unquoted attribute value");
      const char quote = peek();
      ++pos_;
      const auto end = s_.find(quote, pos_);
      if (end == std::string::npos) fail("unterminated attribute value");
      pos_ = end + 1;
    }
  }

  std::unique_ptr<XmlNode> parse_element() {
    if (eof() || peek() != '<') fail("expected an element");
    ++pos_;
    auto node = std::make_unique<XmlNode>();
    node->name = parse_name();
    parse_attributes();
    if (peek() == '/') {
      ++pos_;
      if (eof() || peek() != '>') fail("bad empty-element tag");
      ++pos_;
      return node;
    }
    ++pos_;  // '>'

    std::string text;
    for (;;) {
      if (eof()) fail("unterminated element <" + node->name + ">");
      if (peek() == '<') {
        if (starts_with("</")) {
          pos_ += 2;
          const std::string closing = parse_name();
          if (closing != node->name)
            fail("mismatched closing tag </" + closing + "> for <" + node->name + ">");
          skip_ws();
          if (eof() || peek() != '>') fail("bad closing tag");
          ++pos_;
          break;
        }
        if (starts_with("<!--")) {
          skip_until("-->", "comment");
        } else if (starts_with("<![CDATA[")) {
          const auto end = s_.find("]]>", pos_);
          if (end == std::string::npos) fail("unterminated CDATA");
          text += s_.substr(pos_ + 9, end - pos_ - 9);
          pos_ = end + 3;
        } else if (starts_with("<?")) {
          skip_until("?>", "processing instruction");
        } else {
          node->children.push_back(parse_element());
        }
      } else if (peek() == '&') {
        decode_entity(text);
      } else {
        text += peek();
        ++pos_;
      }
    }

    // trim surrounding whitespace from character data
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
      node->text.clear();
    } else {
      const auto last = text.find_last_not_of(" \t\r\n");
      node->text = text.substr(first, last - first + 1);
    }
    return node;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

std::string element_value(const XmlNode& scope, const std::string& name) {
  const XmlNode* node = scope.find_descendant(name);
  if (node == nullptr) return {};
  // SEC payloads usually wrap the payload in a <value> child
  if (const XmlNode* value = node->find_descendant("value"); value != nullptr)
    return value->text;
  return node->text;
}

bool parse_flag(const std::string& text) {
  return text == "1" || text == "true" || text == "TRUE" || text == "True";
}

double parse_non_negative(const std::string& text, const char* what) {
  if (text.empty()) return 0.0;
  try {
    const double v = std::stod(text);
    if (!std::isfinite(v) || v < 0.0)
      throw MissingRequiredField(std::string(what) + " must be a non-negative number");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw MissingRequiredField(std::string("cannot parse ") + what + ": '" + text + "'");
  }
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

bool Date::valid() const {
  if (year < 1000 || year > 9999 || month < 1 || month > 12 || day < 1) return false;
  static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int max_day = days[month - 1];
  const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  if (month == 2 && leap) max_day = 29;
  return day <= max_day;
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

Date Date::parse(const std::string& s) {
  Date d;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
      std::sscanf(s.c_str(), "%4d-%2d-%2d", &d.year, &d.month, &d.day) != 3 ||
      !d.valid())
    throw MissingRequiredField("invalid transaction date '" + s + "'");
  return d;
}

std::vector<Transaction> parse_form4(const std::string& document) {
  XmlParser parser(document);
  const auto root = parser.parse();

  const std::string cik = element_value(*root, "issuerCik");
  if (!all_digits(cik))
    throw MissingRequiredField("issuerCik missing or not numeric");

  Transaction base;
  base.cik = cik;
  base.filer_name = element_value(*root, "rptOwnerName");
  base.is_director = parse_flag(element_value(*root, "isDirector"));
  base.is_officer = parse_flag(element_value(*root, "isOfficer"));
  base.is_ten_percent_owner = parse_flag(element_value(*root, "isTenPercentOwner"));
  base.is_other = parse_flag(element_value(*root, "isOther"));

  std::vector<const XmlNode*> txn_nodes;
  root->collect_descendants("nonDerivativeTransaction", txn_nodes);

  std::vector<Transaction> out;
  out.reserve(txn_nodes.size());
  for (const XmlNode* node : txn_nodes) {
    Transaction t = base;
    const std::string date = element_value(*node, "transactionDate");
    if (date.empty()) throw MissingRequiredField("transaction has no transactionDate");
    t.transaction_date = Date::parse(date);

    const std::string code = element_value(*node, "transactionAcquiredDisposedCode");
    if (code == "D") t.acquired_disposed = AcqDisp::Dispose;
    else t.acquired_disposed = AcqDisp::Acquire;  // 'A' and absent both acquire

    t.shares = parse_non_negative(element_value(*node, "transactionShares"), "transactionShares");
    t.price = parse_non_negative(element_value(*node, "transactionPricePerShare"),
                                 "transactionPricePerShare");
    out.push_back(std::move(t));
  }
  return out;
}

std::string normalize_name(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

std::size_t levenshtein_distance(const std::string& a, const std::string& b) {
  const std::string x = normalize_name(a);
  const std::string y = normalize_name(b);
  if (x.empty()) return y.size();
  if (y.empty()) return x.size();

  // two-row dynamic program
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

int levenshtein_similarity(const std::string& a, const std::string& b) {
  const std::string x = normalize_name(a);
  const std::string y = normalize_name(b);
  const std::size_t longest = std::max(x.size(), y.size());
  if (longest == 0) return 100;  // two empty strings are identical
  const double d = static_cast<double>(levenshtein_distance(x, y));
  return static_cast<int>(std::lround(100.0 * (1.0 - d / static_cast<double>(longest))));
}

std::vector<Transaction> label_transactions(std::vector<Transaction> txns,
                                            const DefendantList& defendants,
                                            int threshold) {
  if (defendants.names.empty())
    throw EmptyDefendantList("defendant list '" + defendants.source_id + "' is empty");
  if (threshold < 0 || threshold > 100)
    throw ConfigError("similarity threshold must lie in [0, 100]");
  for (auto& t : txns) {
    bool unlawful = false;
    for (const auto& name : defendants.names) {
      if (levenshtein_similarity(t.filer_name, name) >= threshold) {
        unlawful = true;
        break;
      }
    }
    t.label = unlawful ? TxnLabel::Unlawful : TxnLabel::Lawful;
  }
  return txns;
}

DefendantList defendant_list_from_names(std::vector<std::string> names,
                                        const std::string& source_id) {
  DefendantList list;
  list.source_id = source_id;
  std::set<std::string> seen;
  for (auto& raw : names) {
    const auto folded = normalize_name(raw);
    if (folded.empty()) continue;
    if (seen.insert(folded).second) list.names.push_back(std::move(raw));
  }
  return list;
}

DefendantList load_defendant_list(const std::string& path,
                                  const std::string& source_id) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    names.push_back(line.substr(first, last - first + 1));
  }
  return defendant_list_from_names(std::move(names),
                                   source_id.empty() ? path : source_id);
}

namespace {

const char* txn_label_name(TxnLabel l) {
  switch (l) {
    case TxnLabel::Lawful: return "lawful";
    case TxnLabel::Unlawful: return "unlawful";
    default: return "unlabeled";
  }
}

TxnLabel parse_txn_label(const std::string& s) {
  if (s == "lawful") return TxnLabel::Lawful;
  if (s == "unlawful") return TxnLabel::Unlawful;
  if (s == "unlabeled") return TxnLabel::Unlabeled;
  throw ConfigError("unknown transaction label '" + s + "'");
}

}  // namespace

std::string transactions_to_csv(const std::vector<Transaction>& txns) {
  std::string out =
      "cik,filer_name,date,acq_disp,is_director,is_officer,is_ten_pct,is_other,"
      "shares,price,label\n";
  for (const auto& t : txns) {
    out += t.cik;
    out += ',';
    out += csv_escape(t.filer_name);
    out += ',';
    out += t.transaction_date.to_string();
    out += ',';
    out += t.acquired_disposed == AcqDisp::Acquire ? 'A' : 'D';
    out += ',';
    out += t.is_director ? '1' : '0';
    out += ',';
    out += t.is_officer ? '1' : '0';
    out += ',';
    out += t.is_ten_percent_owner ? '1' : '0';
    out += ',';
    out += t.is_other ? '1' : '0';
    out += ',';
    out += format_double(t.shares);
    out += ',';
    out += format_double(t.price);
    out += ',';
    out += txn_label_name(t.label);
    out += '\n';
  }
  return out;
}

std::vector<Transaction> transactions_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw EmptyInput("transactions CSV is empty");
  std::vector<Transaction> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = csv_split_line(line);
    if (f.size() != 11)
      throw ConfigError("transactions CSV row " + std::to_string(row) +
                        " has " + std::to_string(f.size()) + " fields");
    Transaction t;
    t.cik = f[0];
    t.filer_name = f[1];
    t.transaction_date = Date::parse(f[2]);
    t.acquired_disposed = f[3] == "D" ? AcqDisp::Dispose : AcqDisp::Acquire;
    t.is_director = f[4] == "1";
    t.is_officer = f[5] == "1";
    t.is_ten_percent_owner = f[6] == "1";
    t.is_other = f[7] == "1";
    t.shares = std::stod(f[8]);
    t.price = std::stod(f[9]);
    t.label = parse_txn_label(f[10]);
    out.push_back(std::move(t));
  }
  return out;
}

std::pair<Dataset, std::size_t> featurize_transactions(
    const std::vector<Transaction>& txns) {
  std::vector<const Transaction*> labeled;
  std::size_t dropped = 0;
  for (const auto& t : txns) {
    if (t.label == TxnLabel::Unlabeled) ++dropped;
    else labeled.push_back(&t);
  }

  Dataset d;
  d.schema.id = "form4";
  const char* names[] = {"acq_disp", "is_director", "is_officer",
                         "is_ten_pct", "is_other", "shares", "price"};
  const char* groups[] = {"Ownership/Governance", "Ownership/Governance",
                          "Ownership/Governance", "Ownership/Governance",
                          "Ownership/Governance", "Trade", "Trade"};
  for (int c = 0; c < 7; ++c) {
    FeatureSpec f;
    f.name = names[c];
    f.group = groups[c];
    if (c < 5) {
      f.kind = FeatureKind::Categorical;
      f.cardinality = 2;
    }
    d.schema.features.push_back(std::move(f));
  }

  d.x = Matrix(labeled.size(), 7);
  d.y.reserve(labeled.size());
  for (std::size_t r = 0; r < labeled.size(); ++r) {
    const Transaction& t = *labeled[r];
    d.x(r, 0) = t.acquired_disposed == AcqDisp::Acquire ? 1.0 : 0.0;
    d.x(r, 1) = t.is_director ? 1.0 : 0.0;
    d.x(r, 2) = t.is_officer ? 1.0 : 0.0;
    d.x(r, 3) = t.is_ten_percent_owner ? 1.0 : 0.0;
    d.x(r, 4) = t.is_other ? 1.0 : 0.0;
    d.x(r, 5) = t.shares;
    d.x(r, 6) = t.price;
    d.y.push_back(t.label == TxnLabel::Lawful ? Label::Lawful : Label::Unlawful);
  }
  return {std::move(d), dropped};
}

}  // namespace insider
