#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "clv/ingest.hpp"
#include "clv/rng.hpp"

using namespace clv;
using namespace clv::ingest;

static TransactionLog parse(const std::string& csv) {
    std::istringstream in(csv);
    return parse_transaction_log(in, ColumnMapping{});
}

TEST_CASE("parse: same-day aggregation and day offsets") {
    auto log = parse(
        "customer_id,date,amount\n"
        "c1,2020-01-01,10\n"
        "c1,2020-01-01,5\n"
        "c1,2020-01-08,20\n");
    REQUIRE(log.transactions.size() == 2);
    CHECK(log.transactions[0].time == 0.0);
    CHECK(log.transactions[0].amount == 15.0);
    CHECK(log.transactions[1].time == 7.0);
    CHECK(log.transactions[1].amount == 20.0);
}

TEST_CASE("parse: errors") {
    CHECK_THROWS_AS(parse("customer_id,date,amount\nc1,2020-13-01,3\n"), ParseError);
    CHECK_THROWS_AS(parse("customer_id,date,amount\nc1,notadate,3\n"), ParseError);
    CHECK_THROWS_AS(parse("customer_id,date,amount\nc1,2020-01-01,-3.00\n"), ValidationError);
    CHECK_THROWS_AS(parse("customer_id,date,amount\n"), ParseError); // no rows
    CHECK_THROWS_AS(parse(""), ParseError);                          // no header
    CHECK_THROWS_AS(parse("id,when,value\na,2020-01-01,1\n"), ParseError); // unmapped columns
    CHECK_THROWS_AS(parse("customer_id,date,amount\nc1,2020-01-01\n"), ParseError); // short row
}

TEST_CASE("parse: custom column mapping and delimiter") {
    std::istringstream in("who;when;paid\nc9;2021-05-01;3.5\n");
    ColumnMapping m;
    m.id_column = "who";
    m.date_column = "when";
    m.amount_column = "paid";
    m.delimiter = ';';
    auto log = parse_transaction_log(in, m);
    REQUIRE(log.transactions.size() == 1);
    CHECK(log.transactions[0].customer_id == "c9");
}

TEST_CASE("summarize_rfm definitions") {
    TransactionLog log;
    log.transactions = {{"a", 0.0, 40.0}};
    auto s = summarize_rfm(log, 70.0);
    REQUIRE(s.size() == 1);
    CHECK(s[0].x == 0);
    CHECK(s[0].t_x == 0.0);
    CHECK(s[0].T == 10.0);
    CHECK(s[0].z_bar == 40.0);

    log.transactions = {{"b", 0.0, 10.0}, {"b", 14.0, 20.0}, {"b", 35.0, 30.0}};
    s = summarize_rfm(log, 70.0);
    REQUIRE(s.size() == 1);
    CHECK(s[0].x == 2);
    CHECK(s[0].t_x == 5.0);
    CHECK(s[0].T == 10.0);
    CHECK(s[0].z_bar == 20.0);
}

TEST_CASE("summarize_rfm: exclusions, window error, invariants") {
    TransactionLog log;
    log.transactions = {{"a", 0.0, 5.0},  {"a", 30.0, 5.0}, {"b", 80.0, 9.0},
                        {"c", 10.0, 1.0}, {"c", 90.0, 2.0}};
    auto s = summarize_rfm(log, 70.0);
    REQUIRE(s.size() == 2); // b first seen after the cutoff
    for (const auto& e : s) {
        CHECK(e.t_x >= 0.0);
        CHECK(e.t_x <= e.T);
        CHECK(((e.x == 0) == (e.t_x == 0.0)));
    }
    CHECK_THROWS_AS(summarize_rfm(log, -5.0), ValidationError);

    // row-order independence
    TransactionLog shuffled = log;
    std::swap(shuffled.transactions[0], shuffled.transactions[1]);
    std::sort(shuffled.transactions.begin(), shuffled.transactions.end(),
              [](const Transaction& x, const Transaction& y) {
                  return x.customer_id != y.customer_id ? x.customer_id < y.customer_id
                                                        : x.time < y.time;
              });
    auto s2 = summarize_rfm(shuffled, 70.0);
    REQUIRE(s2.size() == s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        CHECK(s2[i].customer_id == s[i].customer_id);
        CHECK(s2[i].z_bar == s[i].z_bar);
    }
}

TEST_CASE("cohort covariates: one-hot bins and group-by oracle") {
    TransactionLog log;
    // synthetic log, 30.4375-day month bins
    Rng rng(17);
    const int n = 300;
    for (int i = 0; i < n; ++i) {
        const double first = 24.0 * 30.4375 * rng.next_double();
        log.transactions.push_back({"c" + std::to_string(i), first, 1.0});
        log.transactions.push_back({"c" + std::to_string(i), first + 400.0, 1.0});
    }
    std::sort(log.transactions.begin(), log.transactions.end(),
              [](const Transaction& a, const Transaction& b) {
                  return a.customer_id != b.customer_id ? a.customer_id < b.customer_id
                                                        : a.time < b.time;
              });
    CohortSpec spec;
    spec.n_bins = 24;
    auto cov = build_cohort_covariates(log, spec);
    REQUIRE(cov.size() == static_cast<size_t>(n));

    std::vector<double> sums(24, 0.0);
    std::map<long, long> groupby; // brute-force oracle over first purchases
    std::map<std::string, double> first;
    for (const auto& t : log.transactions) {
        auto [it, ins] = first.insert({t.customer_id, t.time});
        if (!ins) it->second = std::min(it->second, t.time);
    }
    double base = 1e300;
    for (auto& [id, t] : first) base = std::min(base, std::floor(t / 30.4375));
    for (auto& [id, t] : first) groupby[static_cast<long>(std::floor(t / 30.4375) - base)]++;
    for (const auto& [id, v] : cov) {
        REQUIRE(v.size() == 24);
        double total = 0.0;
        for (size_t k = 0; k < 24; ++k) {
            total += v[k];
            sums[k] += v[k];
        }
        CHECK(total == 1.0); // exactly one-hot
    }
    for (long k = 0; k < 24; ++k)
        CHECK(sums[static_cast<size_t>(k)] ==
              static_cast<double>(groupby.count(k) ? groupby[k] : 0));
}

TEST_CASE("cohort covariates: calendar months and out-of-window error") {
    auto log = parse(
        "customer_id,date,amount\n"
        "a,2020-01-15,1\n"
        "b,2021-12-20,1\n");
    CohortSpec spec;
    spec.n_bins = 24;
    auto cov = build_cohort_covariates(log, spec);
    CHECK(cov["a"][0] == 1.0);  // month 1 of 24
    CHECK(cov["b"][23] == 1.0); // month 24 of 24
    spec.n_bins = 12;
    CHECK_THROWS_WITH_AS(build_cohort_covariates(log, spec),
                         doctest::Contains("customer 'b'"), ValidationError);
}

TEST_CASE("holdout revenue: membership, monotonicity, brute-force oracle") {
    TransactionLog log;
    const double cut = 100.0;
    log.transactions = {
        {"a", 0.0, 3.0},
        {"a", cut + 7.0 * 10.0, 5.0},
        {"a", cut + 7.0 * 60.0, 7.0},
        {"b", 5.0, 2.0},
        {"z", 1.0, 1.0},
        {"z", cut + 7.0 * 104.0, 9.0}, // exactly on the horizon boundary: included
    };
    auto h = holdout_revenue(log, cut, {52.0, 104.0});
    REQUIRE(h.customer_ids.size() == 3);
    std::map<std::string, std::vector<double>> by_id;
    for (size_t i = 0; i < h.customer_ids.size(); ++i) by_id[h.customer_ids[i]] = h.revenue[i];
    CHECK(by_id["a"][0] == 5.0);
    CHECK(by_id["a"][1] == 12.0);
    CHECK(by_id["b"][0] == 0.0);
    CHECK(by_id["b"][1] == 0.0);
    CHECK(by_id["z"][1] == 9.0);
    for (const auto& [id, rev] : by_id) CHECK(rev[0] <= rev[1]);

    // brute-force totals oracle
    for (size_t k = 0; k < 2; ++k) {
        double total = 0.0, brute = 0.0;
        for (const auto& r : h.revenue) total += r[k];
        for (const auto& t : log.transactions)
            if (t.time > cut && t.time <= cut + 7.0 * h.horizons_weeks[k]) brute += t.amount;
        CHECK(total == brute);
    }

    CHECK_THROWS_AS(holdout_revenue(log, cut, {52.0, 2000.0}), ValidationError); // coverage
    CHECK_THROWS_AS(holdout_revenue(log, cut, {104.0, 52.0}), ValidationError);  // ordering
}

TEST_CASE("summaries round-trip through delimited text") {
    std::vector<CustomerSummary> s = {
        {"a", 3, 5.25, 10.5, 20.125, {1.0, 0.0}},
        {"b", 0, 0.0, 4.0, 7.0, {0.0, 1.0}},
    };
    std::stringstream buf;
    write_summaries(buf, s);
    auto back = read_summaries(buf);
    REQUIRE(back.size() == 2);
    CHECK(back[0].customer_id == "a");
    CHECK(back[0].x == 3);
    CHECK(back[0].t_x == 5.25);
    CHECK(back[0].z_bar == 20.125);
    CHECK(back[1].covariates == std::vector<double>{0.0, 1.0});
}

TEST_CASE("attach_covariates length checks") {
    std::vector<CustomerSummary> s = {{"a", 1, 1.0, 2.0, 3.0, {}}, {"b", 0, 0.0, 2.0, 3.0, {}}};
    std::map<std::string, std::vector<double>> cov = {{"a", {1.0}}, {"b", {0.0, 1.0}}};
    CHECK_THROWS_AS(attach_covariates(s, cov), ValidationError);
    cov["b"] = {0.0};
    attach_covariates(s, cov);
    CHECK(s[1].covariates == std::vector<double>{0.0});
}
