import pytest

from skyfed.catalog import load_catalog
from skyfed.node import NodeConfig, SkyNode
from skyfed.portal import FederationConfig, Member, Portal
from skyfed.synth import build_federation, build_tileset

FED_ROWS = 10000
FED_SEED = 20020800


@pytest.fixture(scope="session")
def federation_files(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("federation")
    return build_federation(str(outdir), rows_per_archive=FED_ROWS,
                            seed=FED_SEED)


@pytest.fixture(scope="session")
def catalogs(federation_files):
    """The same CSVs the nodes serve, loaded directly for oracle use."""
    return {
        name: load_catalog(files["schema"], files["data"], index_level=10)
        for name, files in federation_files.items()
    }


@pytest.fixture(scope="session")
def running_nodes(federation_files):
    nodes = {}
    for name, files in federation_files.items():
        fp = files["footprint"]
        cfg = NodeConfig(
            archive_name=name,
            sigma_arcsec=files["sigma_arcsec"],
            host="127.0.0.1", port=0,
            tables=[(files["schema"], files["data"])],
            index_level=10,
            stats_enabled=True,
            wavelength_coverage=files["wavelength"],
            sky_coverage=[(fp["ra"], fp["dec"], fp["radius_arcmin"])],
        )
        node = SkyNode(cfg)
        node.start()
        nodes[name] = node
    yield nodes
    for node in nodes.values():
        node.stop()


@pytest.fixture(scope="session")
def node_urls(running_nodes):
    return {name: node.url for name, node in running_nodes.items()}


@pytest.fixture(scope="session")
def portal(node_urls):
    members = [Member(name, url, "catalog")
               for name, url in node_urls.items()]
    return Portal(FederationConfig(members))


@pytest.fixture(scope="session")
def sigmas(federation_files):
    return {name: files["sigma_arcsec"]
            for name, files in federation_files.items()}


@pytest.fixture(scope="session")
def tileset_dir(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("tiles")
    return build_tileset(str(outdir))


@pytest.fixture(scope="session")
def tileset(tileset_dir):
    from skyfed.cutout import TileSet
    return TileSet.load(tileset_dir)
