import setuptools

setuptools.setup(
    package_data={
        "metaimpute": ["py.typed"],
    },
)
