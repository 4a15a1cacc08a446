"""Built-in label schemas for the supported benchmarks.

CORD's label hierarchy has several public revisions; the 30-code list below is
the v2 release this package targets.
"""

from __future__ import annotations

from .dataset import LabelSchema
from .errors import UnknownDataset

FUNSD_SCHEMA = LabelSchema(
    dataset_name="funsd",
    labels=(
        ("header", "a section or form title"),
        ("question", "a field name asking for a value"),
        ("answer", "a value filling in a field"),
        ("other", "text that is none of the above"),
    ),
)

SROIE_SCHEMA = LabelSchema(
    dataset_name="sroie",
    labels=(
        ("company", "the name of the issuing company"),
        ("date", "the date of the receipt"),
        ("address", "the address of the issuing company"),
        ("total", "the total amount paid"),
        ("other", "text that is none of the above"),
    ),
)

_CORD_CODES = (
    "menu.nm",
    "menu.num",
    "menu.unitprice",
    "menu.cnt",
    "menu.discountprice",
    "menu.price",
    "menu.itemsubtotal",
    "menu.vatyn",
    "menu.etc",
    "menu.sub_nm",
    "menu.sub_unitprice",
    "menu.sub_cnt",
    "menu.sub_price",
    "menu.sub_etc",
    "void_menu.nm",
    "void_menu.price",
    "sub_total.subtotal_price",
    "sub_total.discount_price",
    "sub_total.service_price",
    "sub_total.othersvc_price",
    "sub_total.tax_price",
    "sub_total.etc",
    "total.total_price",
    "total.total_etc",
    "total.cashprice",
    "total.changeprice",
    "total.creditcardprice",
    "total.emoneyprice",
    "total.menutype_cnt",
    "total.menuqty_cnt",
)

_CORD_DESCRIPTIONS = {
    "menu.nm": "name of a menu item",
    "menu.num": "identification number of a menu item",
    "menu.unitprice": "unit price of a menu item",
    "menu.cnt": "quantity of a menu item",
    "menu.discountprice": "discounted price of a menu item",
    "menu.price": "total price of a menu item",
    "menu.itemsubtotal": "subtotal for one menu item group",
    "menu.vatyn": "whether the item is taxed",
    "menu.etc": "other menu item text",
    "menu.sub_nm": "name of a sub menu item",
    "menu.sub_unitprice": "unit price of a sub menu item",
    "menu.sub_cnt": "quantity of a sub menu item",
    "menu.sub_price": "price of a sub menu item",
    "menu.sub_etc": "other sub menu item text",
    "void_menu.nm": "name of a voided menu item",
    "void_menu.price": "price of a voided menu item",
    "sub_total.subtotal_price": "subtotal price",
    "sub_total.discount_price": "discount applied to the subtotal",
    "sub_total.service_price": "service charge",
    "sub_total.othersvc_price": "other service charge",
    "sub_total.tax_price": "tax amount",
    "sub_total.etc": "other subtotal text",
    "total.total_price": "total price of the receipt",
    "total.total_etc": "other total text",
    "total.cashprice": "amount paid in cash",
    "total.changeprice": "change returned",
    "total.creditcardprice": "amount paid by credit card",
    "total.emoneyprice": "amount paid by electronic money",
    "total.menutype_cnt": "count of distinct menu types",
    "total.menuqty_cnt": "count of menu quantities",
}

CORD_SCHEMA = LabelSchema(
    dataset_name="cord",
    labels=tuple((code, _CORD_DESCRIPTIONS[code]) for code in _CORD_CODES),
)

# Schema of the bundled toy dataset (receipt-like, SROIE-style labels).
TOY_SCHEMA = LabelSchema(
    dataset_name="toy",
    labels=(
        ("company", "the name of the issuing company"),
        ("date", "the date of the receipt"),
        ("address", "the address of the issuing company"),
        ("total", "the total amount paid"),
        ("other", "text that is none of the above"),
    ),
)

_SCHEMAS = {
    "funsd": FUNSD_SCHEMA,
    "cord": CORD_SCHEMA,
    "sroie": SROIE_SCHEMA,
    "toy": TOY_SCHEMA,
}


def get_schema(dataset_name: str) -> LabelSchema:
    try:
        return _SCHEMAS[dataset_name]
    except KeyError:
        raise UnknownDataset(
            f"no built-in schema for {dataset_name!r}; known: {sorted(_SCHEMAS)}"
        ) from None
