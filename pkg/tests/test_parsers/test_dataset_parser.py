import pytest

from shield_patcher.models.text_models import UNK_ID
from shield_patcher.parsers.dataset_parser import build_vocab, load_csv, split_dataset, tokenize, write_csv
from shield_patcher.utils.exceptions import DatasetError


def _write(path, content):
    path.write_text(content, encoding="utf-8")
    return str(path)


def test_tokenize_lowercases_and_strips_punctuation():
    assert tokenize("Hello, World!  It's  fine.") == ["hello", "world", "it's", "fine"]


def test_tokenize_keeps_pure_punctuation_tokens():
    assert tokenize("wait ... what?!") == ["wait", "...", "what"]


def test_tokenize_whitespace_only_is_empty():
    assert tokenize(" \t\n ") == []


def test_build_vocab_assigns_ids_in_first_occurrence_order():
    vocab = build_vocab(["b a", "c a b"])
    assert vocab.id_to_token == ["<pad>", "<unk>", "b", "a", "c"]


def test_build_vocab_rejects_empty_corpus():
    with pytest.raises(DatasetError):
        build_vocab(["   ", ""])


def test_load_csv_maps_string_labels_in_sorted_order(tmp_path):
    path = _write(tmp_path / "data.csv", "text,label\ngreat movie,pos\nawful movie,neg\nfine film,pos\n")
    dataset = load_csv(path)
    assert dataset.label_names == ["neg", "pos"]
    assert dataset.labels == [1, 0, 1]
    assert dataset.num_classes == 2
    assert dataset.vocabulary.decode(dataset.examples[0].token_ids) == ["great", "movie"]


def test_load_csv_keeps_contiguous_integer_labels(tmp_path):
    path = _write(tmp_path / "data.csv", "text,label\na b,1\nc d,0\ne f,2\n")
    dataset = load_csv(path)
    assert dataset.labels == [1, 0, 2]


def test_load_csv_with_shared_vocabulary_maps_unknown_words(tmp_path):
    train = load_csv(_write(tmp_path / "train.csv", "text,label\nred fox,a\nblue owl,b\n"))
    test = load_csv(_write(tmp_path / "test.csv", "text,label\nred cat,b\n"), vocabulary=train.vocabulary,
                    label_names=train.label_names, split="test")
    assert test.examples[0].token_ids == [train.vocabulary.lookup("red"), UNK_ID]
    assert test.labels == [1]
    assert len(train.vocabulary) == len(test.vocabulary)


def test_load_csv_custom_columns(tmp_path):
    path = _write(tmp_path / "data.csv", "id,sentence,target\n1,hi there,x\n2,bye now,y\n")
    dataset = load_csv(path, text_column="sentence", label_column="target")
    assert len(dataset) == 2


def test_load_csv_missing_file_names_path(tmp_path):
    missing = str(tmp_path / "nope.csv")
    with pytest.raises(DatasetError, match="nope.csv"):
        load_csv(missing)


def test_load_csv_missing_column(tmp_path):
    path = _write(tmp_path / "data.csv", "body,label\nhello,a\n")
    with pytest.raises(DatasetError, match="Column 'text'"):
        load_csv(path)


def test_load_csv_reports_row_of_empty_text(tmp_path):
    path = _write(tmp_path / "data.csv", "text,label\nhello,a\n   ,b\n")
    with pytest.raises(DatasetError) as excinfo:
        load_csv(path)
    assert excinfo.value.row == 3
    assert "Row 3" in str(excinfo.value)


def test_load_csv_rejects_unknown_label_with_fixed_names(tmp_path):
    path = _write(tmp_path / "data.csv", "text,label\nhello,c\n")
    with pytest.raises(DatasetError, match="Label 'c'"):
        load_csv(path, label_names=["a", "b"])


def test_load_csv_header_only(tmp_path):
    path = _write(tmp_path / "data.csv", "text,label\n")
    with pytest.raises(DatasetError, match="no rows"):
        load_csv(path)


def test_write_then_load_preserves_texts_and_labels(tmp_path):
    original = load_csv(_write(tmp_path / "in.csv", 'text,label\n"one, two",x\nthree,y\n'))
    write_csv(original, str(tmp_path / "out" / "copy.csv"))
    reloaded = load_csv(str(tmp_path / "out" / "copy.csv"))
    assert [ex.text for ex in reloaded.examples] == ["one, two", "three"]
    assert reloaded.labels == original.labels


def test_split_dataset_is_seeded_and_partitions(tmp_path):
    rows = "".join(f"word{i} other{i},{i % 2}\n" for i in range(20))
    dataset = load_csv(_write(tmp_path / "data.csv", "text,label\n" + rows))
    train, validation, test = split_dataset(dataset, seed=3)
    assert (len(train), len(validation), len(test)) == (16, 2, 2)
    assert (train.split, validation.split, test.split) == ("train", "validation", "test")
    texts = [ex.text for part in (train, validation, test) for ex in part.examples]
    assert sorted(texts) == sorted(ex.text for ex in dataset.examples)
    again = split_dataset(dataset, seed=3)
    assert [ex.text for ex in again[1].examples] == [ex.text for ex in validation.examples]


def test_split_dataset_needs_three_examples(tmp_path):
    dataset = load_csv(_write(tmp_path / "data.csv", "text,label\na,0\nb,1\n"))
    with pytest.raises(DatasetError):
        split_dataset(dataset)
