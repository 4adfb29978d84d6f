import warnings
from collections import Counter

import pytest

from promptveil.datasets import (
    LabeledExample,
    PortraitCategories,
    generate_portrait,
    load_corpus,
    sample_profile,
    save_corpus,
)
from promptveil.errors import MisconfiguredCategories, ParseError
from promptveil.evaluation import DEFAULT_TEMPLATES, CallableChatClient, TaskTemplate


class TestLoadCorpus:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_corpus(path) == []

    def test_hand_written_tsv(self, tmp_path):
        path = tmp_path / "corpus.tsv"
        path.write_text(
            "text\tlabel\n"
            "a fine day\tPositive\n"
            "a dull day\tNegative\n"
            "rain again\tNegative\n"
        )
        examples = load_corpus(path, format="tsv")
        assert len(examples) == 3
        assert examples[0] == LabeledExample(text="a fine day", label="Positive")
        assert examples[2].label == "Negative"

    def test_missing_label_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"text": "ok", "label": "x"}\n{"text": "no label here"}\n')
        with pytest.raises(ParseError, match=r"bad\.jsonl:2.*label"):
            load_corpus(path)

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("{not json}\n")
        with pytest.raises(ParseError, match=r"bad\.jsonl:1"):
            load_corpus(path)

    def test_schema_maps_columns(self, tmp_path):
        path = tmp_path / "corpus.csv"
        path.write_text("sentence,sentiment\nfine,Positive\n")
        examples = load_corpus(path, format="csv", schema={"text": "sentence", "label": "sentiment"})
        assert examples[0].text == "fine"
        assert examples[0].label == "Positive"

    def test_round_trip(self, tmp_path):
        examples = [
            LabeledExample(text="plain", label="a"),
            LabeledExample(
                text="portrait",
                label="depression",
                attributes={"age": "30", "gender": "female", "location": "Toronto",
                            "occupation": "nurse", "disorder": "depression"},
                expert_reviewed=False,
            ),
        ]
        path = tmp_path / "corpus.jsonl"
        save_corpus(examples, path)
        assert load_corpus(path) == examples


class TestSampleProfile:
    def test_deterministic_under_seed(self):
        assert sample_profile(42) == sample_profile(42)

    def test_age_bounds_hold(self):
        for seed in range(500):
            assert 18 <= sample_profile(seed).age <= 65

    def test_gender_split_over_many_seeds(self):
        genders = Counter(sample_profile(seed).gender for seed in range(10000))
        assert 0.48 <= genders["male"] / 10000 <= 0.52

    def test_values_drawn_from_category_lists(self):
        categories = PortraitCategories()
        profile = sample_profile(7, categories)
        assert profile.location in categories.locations
        assert profile.occupation in categories.occupations
        assert profile.disorder in categories.disorders

    def test_wrong_list_sizes_warn_not_raise(self):
        with pytest.warns(MisconfiguredCategories):
            PortraitCategories(locations=("only", "two"))

    def test_default_sizes_are_quiet(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            PortraitCategories()


class TestGeneratePortrait:
    def echo_client(self):
        return CallableChatClient(responder=lambda system, user: user)

    def test_echo_mock_contains_all_attributes(self):
        profile = sample_profile(3)
        example = generate_portrait(profile, self.echo_client())
        for value in (str(profile.age), profile.gender, profile.occupation,
                      profile.disorder, profile.location):
            assert value in example.text
        assert example.label == profile.disorder
        assert example.attributes == profile.as_attributes()
        assert example.expert_reviewed is False

    def test_unbound_placeholder_fails_before_any_call(self):
        calls = []
        client = CallableChatClient(responder=lambda s, u: calls.append(u) or "x")
        broken = TaskTemplate(
            task="portrait_generation",
            system_prompt="sys",
            user_template="only <<<AGE>>> here",
        )
        with pytest.raises(ValueError, match="GENDER"):
            generate_portrait(sample_profile(1), client, broken)
        assert calls == []

    def test_batch_of_five_distinct_profiles(self):
        client = self.echo_client()
        examples = [generate_portrait(sample_profile(100 + i), client) for i in range(5)]
        assert len({e.text for e in examples}) == 5
        again = [generate_portrait(sample_profile(100 + i), client) for i in range(5)]
        assert [e.text for e in examples] == [e.text for e in again]
