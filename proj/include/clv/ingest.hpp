#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace clv::ingest {

struct Transaction {
    std::string customer_id;
    double time = 0.0;   // days since the earliest date in the dataset
    double amount = 0.0; // currency units, >= 0
};

struct TransactionLog {
    std::vector<Transaction> transactions; // sorted by (customer_id, time)
    std::string time_unit = "weeks";       // model-facing unit; storage is days
    // civil day (days since 1970-01-01) of time == 0; absent for synthetic logs
    std::optional<long> epoch_day;
};

struct CustomerSummary {
    std::string customer_id;
    long x = 0;          // repeat transactions in the calibration window
    double t_x = 0.0;    // recency in weeks from first transaction
    double T = 0.0;      // calibration length in weeks from first transaction
    double z_bar = 0.0;  // mean spend per calibration transaction
    std::vector<double> covariates;
};

struct CohortSpec {
    int granularity_months = 1;
    int n_bins = 24;
};

struct ColumnMapping {
    std::string id_column = "customer_id";
    std::string date_column = "date";
    std::string amount_column = "amount";
    char delimiter = ',';
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// days since civil epoch for an ISO date; throws ParseError on bad input
long parse_iso_date(const std::string& s);

// Delimited text with a header row. Same-day rows of one customer are merged
// into a single transaction with summed amount.
TransactionLog parse_transaction_log(std::istream& source, const ColumnMapping& mapping);
TransactionLog parse_transaction_log_file(const std::string& path, const ColumnMapping& mapping);

// RFM summaries over (0, calibration_end] in weeks. Customers first seen
// after calibration_end are excluded. z_bar averages all calibration
// transactions including the first.
std::vector<CustomerSummary> summarize_rfm(const TransactionLog& log, double calibration_end_days);

// One-hot acquisition-cohort vectors keyed by calendar month of first
// purchase, chronological bin order. Bin 0 is the month of the earliest
// first purchase in the log.
std::map<std::string, std::vector<double>> build_cohort_covariates(const TransactionLog& log,
                                                                   const CohortSpec& spec);

// Per-customer cumulative revenue in (calibration_end, calibration_end + 7 h]
// for each horizon h (weeks, strictly increasing). Row order matches the
// customers present in the calibration window.
struct HoldoutRevenue {
    std::vector<std::string> customer_ids;
    std::vector<double> horizons_weeks;
    std::vector<std::vector<double>> revenue; // [customer][horizon]
};
HoldoutRevenue holdout_revenue(const TransactionLog& log, double calibration_end_days,
                               const std::vector<double>& horizons_weeks);

// attach cohort (or other) covariates to summaries, by customer id
void attach_covariates(std::vector<CustomerSummary>& summaries,
                       const std::map<std::string, std::vector<double>>& covariates);

// summaries <-> delimited text, column order:
// customer_id, x, t_x, T, z_bar, cov_1..cov_p
void write_summaries(std::ostream& out, const std::vector<CustomerSummary>& summaries);
std::vector<CustomerSummary> read_summaries(std::istream& in);
void write_summaries_file(const std::string& path, const std::vector<CustomerSummary>& summaries);
std::vector<CustomerSummary> read_summaries_file(const std::string& path);

// day-offset log format (customer_id, day, amount), used for synthetic data
void write_transaction_log_file(const std::string& path, const TransactionLog& log);
TransactionLog read_day_log_file(const std::string& path);

} // namespace clv::ingest
