#include "clv/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace clv::ingest {

namespace {

constexpr double kDaysPerWeek = 7.0;

// Hinnant's days_from_civil
long days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<long>(era) * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long yy = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, delim)) out.push_back(field);
    if (!line.empty() && line.back() == delim) out.push_back("");
    return out;
}

std::string trim(std::string s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.erase(s.begin());
    while (!s.empty() && is_space(s.back())) s.pop_back();
    return s;
}

} // namespace

long parse_iso_date(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    std::istringstream in(s);
    in >> y >> dash1 >> m >> dash2 >> d;
    if (!in || dash1 != '-' || dash2 != '-' || m < 1 || m > 12 || d < 1 || d > 31)
        throw ParseError("unparseable ISO date: '" + s + "'");
    return days_from_civil(y, m, d);
}

TransactionLog parse_transaction_log(std::istream& source, const ColumnMapping& mapping) {
    std::string line;
    if (!std::getline(source, line)) throw ParseError("empty input: no header row");
    const auto header = split(trim(line), mapping.delimiter);
    int id_idx = -1, date_idx = -1, amount_idx = -1;
    for (size_t i = 0; i < header.size(); ++i) {
        const std::string h = trim(header[i]);
        if (h == mapping.id_column) id_idx = static_cast<int>(i);
        else if (h == mapping.date_column) date_idx = static_cast<int>(i);
        else if (h == mapping.amount_column) amount_idx = static_cast<int>(i);
    }
    if (id_idx < 0 || date_idx < 0 || amount_idx < 0)
        throw ParseError("header is missing one of the mapped columns '" + mapping.id_column +
                         "', '" + mapping.date_column + "', '" + mapping.amount_column + "'");

    struct Row {
        std::string id;
        long day;
        double amount;
    };
    std::vector<Row> rows;
    long line_no = 1;
    while (std::getline(source, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto fields = split(t, mapping.delimiter);
        const int needed = std::max({id_idx, date_idx, amount_idx});
        if (static_cast<int>(fields.size()) <= needed)
            throw ParseError("line " + std::to_string(line_no) + ": expected at least " +
                             std::to_string(needed + 1) + " fields");
        Row r;
        r.id = trim(fields[id_idx]);
        if (r.id.empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty customer id");
        try {
            r.day = parse_iso_date(trim(fields[date_idx]));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string amt = trim(fields[amount_idx]);
        char* end = nullptr;
        r.amount = std::strtod(amt.c_str(), &end);
        if (end == amt.c_str() || *end != '\0')
            throw ParseError("line " + std::to_string(line_no) + ": unparseable amount '" + amt + "'");
        if (r.amount < 0.0)
            throw ValidationError("line " + std::to_string(line_no) + ": negative amount " + amt);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ParseError("empty input: no data rows");

    long min_day = std::numeric_limits<long>::max();
    for (const auto& r : rows) min_day = std::min(min_day, r.day);

    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.id != b.id ? a.id < b.id : a.day < b.day;
    });

    TransactionLog log;
    log.epoch_day = min_day;
    for (const auto& r : rows) {
        const double t = static_cast<double>(r.day - min_day);
        if (!log.transactions.empty() && log.transactions.back().customer_id == r.id &&
            log.transactions.back().time == t) {
            log.transactions.back().amount += r.amount; // same-day merge
        } else {
            log.transactions.push_back({r.id, t, r.amount});
        }
    }
    return log;
}

TransactionLog parse_transaction_log_file(const std::string& path, const ColumnMapping& mapping) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open transaction log: " + path);
    return parse_transaction_log(in, mapping);
}

std::vector<CustomerSummary> summarize_rfm(const TransactionLog& log, double calibration_end_days) {
    if (log.transactions.empty()) throw ValidationError("summarize_rfm: empty log");
    double min_time = std::numeric_limits<double>::infinity();
    for (const auto& t : log.transactions) min_time = std::min(min_time, t.time);
    if (calibration_end_days < min_time)
        throw ValidationError("summarize_rfm: calibration_end precedes the dataset start");

    std::vector<CustomerSummary> out;
    size_t i = 0;
    const auto& txs = log.transactions;
    while (i < txs.size()) {
        const std::string& id = txs[i].customer_id;
        size_t j = i;
        while (j < txs.size() && txs[j].customer_id == id) ++j;
        // [i, j) is one customer, time-ascending
        const double first = txs[i].time;
        if (first <= calibration_end_days) {
            CustomerSummary s;
            s.customer_id = id;
            double last = first;
            double total = 0.0;
            long count = 0;
            for (size_t k = i; k < j && txs[k].time <= calibration_end_days; ++k) {
                last = txs[k].time;
                total += txs[k].amount;
                ++count;
            }
            s.x = count - 1;
            s.t_x = (last - first) / kDaysPerWeek;
            s.T = (calibration_end_days - first) / kDaysPerWeek;
            s.z_bar = total / count;
            out.push_back(std::move(s));
        }
        i = j;
    }
    return out;
}

std::map<std::string, std::vector<double>> build_cohort_covariates(const TransactionLog& log,
                                                                   const CohortSpec& spec) {
    if (spec.n_bins < 1) throw ValidationError("build_cohort_covariates: n_bins must be >= 1");
    // first purchase per customer
    std::map<std::string, double> first_time;
    for (const auto& t : log.transactions) {
        auto [it, inserted] = first_time.insert({t.customer_id, t.time});
        if (!inserted) it->second = std::min(it->second, t.time);
    }
    const auto month_index = [&](double time_days) -> long {
        if (log.epoch_day) {
            int y;
            unsigned m, d;
            civil_from_days(*log.epoch_day + static_cast<long>(std::llround(time_days)), y, m, d);
            return static_cast<long>(y) * 12 + static_cast<long>(m) - 1;
        }
        // synthetic logs carry no calendar: use mean-month bins
        return static_cast<long>(std::floor(time_days / 30.4375));
    };
    long base = std::numeric_limits<long>::max();
    for (const auto& [id, t] : first_time) base = std::min(base, month_index(t));

    std::map<std::string, std::vector<double>> out;
    for (const auto& [id, t] : first_time) {
        const long bin = (month_index(t) - base) / spec.granularity_months;
        if (bin < 0 || bin >= spec.n_bins)
            throw ValidationError("cohort assignment: first purchase of customer '" + id +
                                  "' falls outside the " + std::to_string(spec.n_bins) +
                                  "-bin cohort window");
        std::vector<double> v(spec.n_bins, 0.0);
        v[static_cast<size_t>(bin)] = 1.0;
        out[id] = std::move(v);
    }
    return out;
}

HoldoutRevenue holdout_revenue(const TransactionLog& log, double calibration_end_days,
                               const std::vector<double>& horizons_weeks) {
    for (size_t k = 1; k < horizons_weeks.size(); ++k)
        if (!(horizons_weeks[k] > horizons_weeks[k - 1]))
            throw ValidationError("holdout_revenue: horizons must be strictly increasing");
    if (horizons_weeks.empty()) throw ValidationError("holdout_revenue: no horizons");
    double max_time = 0.0;
    for (const auto& t : log.transactions) max_time = std::max(max_time, t.time);
    if (calibration_end_days + kDaysPerWeek * horizons_weeks.back() > max_time + kDaysPerWeek)
        throw ValidationError("holdout_revenue: horizon " +
                              std::to_string(horizons_weeks.back()) +
                              "w exceeds the data coverage");

    const auto summaries = summarize_rfm(log, calibration_end_days);
    std::unordered_map<std::string, size_t> index;
    HoldoutRevenue out;
    out.horizons_weeks = horizons_weeks;
    for (const auto& s : summaries) {
        index[s.customer_id] = out.customer_ids.size();
        out.customer_ids.push_back(s.customer_id);
        out.revenue.emplace_back(horizons_weeks.size(), 0.0);
    }
    for (const auto& t : log.transactions) {
        if (t.time <= calibration_end_days) continue;
        const auto it = index.find(t.customer_id);
        if (it == index.end()) continue; // acquired after the cutoff
        for (size_t k = 0; k < horizons_weeks.size(); ++k)
            if (t.time <= calibration_end_days + kDaysPerWeek * horizons_weeks[k])
                out.revenue[it->second][k] += t.amount;
    }
    return out;
}

void attach_covariates(std::vector<CustomerSummary>& summaries,
                       const std::map<std::string, std::vector<double>>& covariates) {
    size_t width = 0;
    bool first = true;
    for (auto& s : summaries) {
        const auto it = covariates.find(s.customer_id);
        if (it == covariates.end())
            throw ValidationError("attach_covariates: no vector for customer '" + s.customer_id + "'");
        if (first) {
            width = it->second.size();
            first = false;
        } else if (it->second.size() != width) {
            throw ValidationError("attach_covariates: covariate length mismatch for customer '" +
                                  s.customer_id + "'");
        }
        s.covariates = it->second;
    }
}

void write_summaries(std::ostream& out, const std::vector<CustomerSummary>& summaries) {
    size_t p = summaries.empty() ? 0 : summaries.front().covariates.size();
    out << "customer_id,x,t_x,T,z_bar";
    for (size_t k = 1; k <= p; ++k) out << ",cov_" << k;
    out << "\n";
    out << std::setprecision(17);
    for (const auto& s : summaries) {
        out << s.customer_id << "," << s.x << "," << s.t_x << "," << s.T << "," << s.z_bar;
        for (double c : s.covariates) out << "," << c;
        out << "\n";
    }
}

std::vector<CustomerSummary> read_summaries(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("summaries: empty input");
    const auto header = split(trim(line), ',');
    if (header.size() < 5 || header[0] != "customer_id")
        throw ParseError("summaries: unexpected header");
    std::vector<CustomerSummary> out;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto f = split(t, ',');
        if (f.size() != header.size())
            throw ParseError("summaries line " + std::to_string(line_no) + ": field count mismatch");
        CustomerSummary s;
        s.customer_id = f[0];
        s.x = std::stol(f[1]);
        s.t_x = std::stod(f[2]);
        s.T = std::stod(f[3]);
        s.z_bar = std::stod(f[4]);
        for (size_t k = 5; k < f.size(); ++k) s.covariates.push_back(std::stod(f[k]));
        out.push_back(std::move(s));
    }
    return out;
}

void write_summaries_file(const std::string& path, const std::vector<CustomerSummary>& summaries) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        write_summaries(out, summaries);
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("atomic rename failed for: " + path);
}

std::vector<CustomerSummary> read_summaries_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open summaries: " + path);
    return read_summaries(in);
}

void write_transaction_log_file(const std::string& path, const TransactionLog& log) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        out << "customer_id,day,amount\n" << std::setprecision(17);
        for (const auto& t : log.transactions)
            out << t.customer_id << "," << t.time << "," << t.amount << "\n";
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("atomic rename failed for: " + path);
}

TransactionLog read_day_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open log: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("day log: empty input");
    if (trim(line) != "customer_id,day,amount")
        throw ParseError("day log: unexpected header '" + trim(line) + "'");
    TransactionLog log;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto f = split(t, ',');
        if (f.size() != 3)
            throw ParseError("day log line " + std::to_string(line_no) + ": expected 3 fields");
        const double amount = std::stod(f[2]);
        if (amount < 0.0)
            throw ValidationError("day log line " + std::to_string(line_no) + ": negative amount");
        log.transactions.push_back({f[0], std::stod(f[1]), amount});
    }
    if (log.transactions.empty()) throw ParseError("day log: no data rows");
    std::sort(log.transactions.begin(), log.transactions.end(),
              [](const Transaction& a, const Transaction& b) {
                  return a.customer_id != b.customer_id ? a.customer_id < b.customer_id
                                                        : a.time < b.time;
              });
    return log;
}

} // namespace clv::ingest
