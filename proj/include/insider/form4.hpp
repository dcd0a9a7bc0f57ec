#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "insider/dataset.hpp"

namespace insider {

struct Date {
  int year = 0, month = 0, day = 0;

  bool valid() const;
  std::string to_string() const;              // YYYY-MM-DD
  static Date parse(const std::string& s);    // throws MissingRequiredField
  bool operator==(const Date&) const = default;
};

enum class AcqDisp : std::uint8_t { Acquire, Dispose };

enum class TxnLabel : std::uint8_t { Lawful, Unlawful, Unlabeled };

// One parsed non-derivative Form 4 transaction.
struct Transaction {
  std::string cik;          // non-empty, digits only
  std::string filer_name;
  Date transaction_date;
  AcqDisp acquired_disposed = AcqDisp::Acquire;
  bool is_director = false;
  bool is_officer = false;
  bool is_ten_percent_owner = false;
  bool is_other = false;
  double shares = 0.0;
  double price = 0.0;
  TxnLabel label = TxnLabel::Unlabeled;

  bool operator==(const Transaction&) const = default;
};

struct DefendantList {
  std::vector<std::string> names;  // non-empty, deduplicated after case-fold
  std::string source_id;
};

// Ownership-document XML -> one Transaction per nonDerivativeTransaction
// element. Flags default to false when absent; a missing acquired/disposed
// code defaults to acquire. Throws MalformedXml on unparseable input and
// MissingRequiredField when the issuer CIK or a transaction date is absent.
std::vector<Transaction> parse_form4(const std::string& document);

// Case-folded, whitespace-collapsed Levenshtein edit distance.
std::size_t levenshtein_distance(const std::string& a, const std::string& b);

// round(100 * (1 - d / max(|a|,|b|))) on the normalized strings; two empty
// strings score 100.
int levenshtein_similarity(const std::string& a, const std::string& b);

// Case-fold and collapse whitespace runs; the form every comparison sees.
std::string normalize_name(const std::string& s);

// Any defendant scoring >= threshold marks a transaction Unlawful; everything
// else becomes Lawful. Order preserved; idempotent. Throws EmptyDefendantList.
std::vector<Transaction> label_transactions(std::vector<Transaction> txns,
                                            const DefendantList& defendants,
                                            int threshold = 85);

// One name per line, '#' comments, blank lines skipped.
DefendantList load_defendant_list(const std::string& path,
                                  const std::string& source_id = "");
DefendantList defendant_list_from_names(std::vector<std::string> names,
                                        const std::string& source_id = "");

// header: cik,filer_name,date,acq_disp,is_director,is_officer,is_ten_pct,
//         is_other,shares,price,label
std::string transactions_to_csv(const std::vector<Transaction>& txns);
std::vector<Transaction> transactions_from_csv(const std::string& text);

// Numeric/flag feature table from labeled transactions (unlabeled rows are
// dropped with a diagnostic count in the returned pair).
std::pair<Dataset, std::size_t> featurize_transactions(
    const std::vector<Transaction>& txns);

}  // namespace insider
