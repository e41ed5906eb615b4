#include "doctest.h"

#include "revgen/schemas.hpp"

using namespace revgen;
using namespace revgen::schemas;

TEST_CASE("extraction answers parse with relevance flags") {
    std::string doc =
        "<answers>"
        "<item qid=\"Q1\"><relevant>true</relevant><answer>Pt/Al2O3</answer>"
        "<evidence>prepared on alumina</evidence></item>"
        "<item qid=\"Q2\"><relevant>false</relevant><answer></answer><evidence></evidence></item>"
        "</answers>";
    auto r = parse_answers(doc);
    REQUIRE(r.ok());
    REQUIRE(r.value().items.size() == 2);
    CHECK(r.value().items[0].qid == "Q1");
    CHECK(r.value().items[0].relevant);
    CHECK(r.value().items[0].answer == "Pt/Al2O3");
    CHECK_FALSE(r.value().items[1].relevant);
}

TEST_CASE("extraction answers reject shape violations") {
    CHECK(parse_answers("<answers></answers>").error().code == "missing_child");
    CHECK(parse_answers("<answers><item><relevant>true</relevant><answer>a</answer>"
                        "<evidence>e</evidence></item></answers>")
              .error()
              .code == "missing_attribute");
    CHECK(parse_answers("<answers><item qid=\"Q1\"><relevant>maybe</relevant><answer>a</answer>"
                        "<evidence>e</evidence></item></answers>")
              .error()
              .code == "bad_value");
    std::string dup =
        "<answers>"
        "<item qid=\"Q1\"><relevant>true</relevant><answer>a</answer><evidence>e</evidence></item>"
        "<item qid=\"Q1\"><relevant>true</relevant><answer>b</answer><evidence>f</evidence></item>"
        "</answers>";
    CHECK(parse_answers(dup).error().code == "duplicate_qid");
    CHECK(parse_answers("<answers><item qid=\"Q1\"><relevant>true</relevant>"
                        "<answer>a</answer></item></answers>")
              .error()
              .code == "missing_child");
}

TEST_CASE("paragraph schema happy path and violations") {
    std::string ok =
        "<paragraph topic=\"t\"><text>a [10.1/x]</text>"
        "<references><doi>10.1/x</doi></references></paragraph>";
    auto r = parse_paragraph(ok);
    REQUIRE(r.ok());
    CHECK(r.value().topic == "t");
    CHECK(r.value().text == "a [10.1/x]");
    CHECK(r.value().references == std::vector<std::string>{"10.1/x"});

    CHECK(parse_paragraph("<paragraph><text>...").error().code == "unclosed_tag");
    CHECK(parse_paragraph("<paragraph><text>a</text><references><doi>10.1/x</doi>"
                          "</references></paragraph>")
              .error()
              .code == "missing_attribute");
    CHECK(parse_paragraph("<paragraph topic=\"t\"><text></text><references>"
                          "<doi>10.1/x</doi></references></paragraph>")
              .error()
              .code == "empty_text");
    CHECK(parse_paragraph("<paragraph topic=\"t\"><text>a</text>"
                          "<references></references></paragraph>")
              .error()
              .code == "missing_child");
}

TEST_CASE("mining record schema") {
    auto r = parse_record(
        "<record><field name=\"type\">Pt-based</field><field name=\"selectivity\">85</field>"
        "</record>");
    REQUIRE(r.ok());
    REQUIRE(r.value().fields.size() == 2);
    CHECK(r.value().fields[0].name == "type");
    CHECK(r.value().fields[1].value == "85");

    // A record claiming nothing is still well-formed.
    CHECK(parse_record("<record></record>").ok());
    CHECK(parse_record("<record><field>v</field></record>").error().code == "missing_attribute");
    CHECK(parse_record("<record><field name=\"a\">1</field><field name=\"a\">2</field></record>")
              .error()
              .code == "duplicate_field");
}

TEST_CASE("comparison verdict accepts one of choice or score") {
    CHECK(*parse_verdict("<verdict><choice>A</choice></verdict>").value().choice == Choice::A);
    CHECK(*parse_verdict("<verdict><choice>TIE</choice></verdict>").value().choice == Choice::Tie);
    CHECK(*parse_verdict("<verdict><choice>yes</choice></verdict>").value().choice == Choice::Yes);
    CHECK(*parse_verdict("<verdict><score>7.5</score></verdict>").value().score ==
          doctest::Approx(7.5));

    CHECK(parse_verdict("<verdict></verdict>").error().code == "missing_child");
    CHECK(parse_verdict("<verdict><choice>A</choice><score>3</score></verdict>").error().code ==
          "missing_child");
    CHECK(parse_verdict("<verdict><choice>C</choice></verdict>").error().code == "bad_value");
    CHECK(parse_verdict("<verdict><score>11</score></verdict>").error().code == "bad_value");
    CHECK(parse_verdict("<verdict><score>high</score></verdict>").error().code == "bad_value");
}

TEST_CASE("consistency verdict bounds") {
    CHECK(parse_consistency("<consistency><percent>100</percent></consistency>").value().percent ==
          100);
    CHECK(parse_consistency("<consistency><percent>0</percent></consistency>").value().percent == 0);
    CHECK(parse_consistency("<consistency><percent>101</percent></consistency>").error().code ==
          "bad_value");
    CHECK(parse_consistency("<consistency><percent>85.5</percent></consistency>").error().code ==
          "bad_value");
    CHECK(parse_consistency("<consistency></consistency>").error().code == "missing_child");
}

TEST_CASE("parse_structured dispatches by schema name") {
    auto ok = parse_structured("chatter <verdict><choice>B</choice></verdict> more chatter",
                               "comparison-verdict");
    REQUIRE(ok.ok());
    CHECK(std::holds_alternative<VerdictPayload>(ok.value().payload));
    CHECK(ok.value().raw_text.find("chatter") == 0);

    CHECK(parse_structured("<x/>", "no-such-schema").error().code == "unknown_schema");
    CHECK_FALSE(is_registered("no-such-schema"));
    CHECK(registered_schemas().size() == 5);
}
