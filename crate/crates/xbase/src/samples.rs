//! Sample documents and schemas used by the bench harness and the test
//! suites: a small membership document, a granularity schema that shreds
//! each person and each address into its own fragment, and the coarse
//! schema that keeps the whole document in one piece.

/// Membership details for five people; two of them have no age recorded.
pub const MEMBERS_XML: &str = r#"<XBaseMembers>
  <researchFellows>
    <person>
      <name> Evangelos Zirintsis</name>
      <address>
        <town>St Andrews</town>
      </address>
      <age>29</age>
    </person>
  </researchFellows>
  <teachingStaff>
    <person>
      <name> Graham Kirby</name>
      <address>
        <town>Kingsbarns</town>
      </address>
      <age>36</age>
    </person>
    <person>
      <name> Ron Morrison</name>
      <address>
        <town>St Andrews</town>
      </address>
    </person>
    <person>
      <name> Al Dearle</name>
      <address>
        <town>St Andrews</town>
      </address>
    </person>
  </teachingStaff>
</XBaseMembers>
"#;

/// Granularity rules for [`MEMBERS_XML`]: every `person` reference and the
/// `address` reference nested inside it become separate fragments.
pub const MEMBERS_GRANULARITY_SCHEMA: &str = r#"<xsd:schema xmlns:xsd="http://www.w3.org/2001/XMLSchema">
  <xsd:element name="XBaseMembers">
    <xsd:complexType>
      <xsd:sequence>
        <xsd:element name="researchFellows">
          <xsd:complexType>
            <xsd:sequence>
              <xsd:element ref="person" minOccurs="0" maxOccurs="unbounded"/>
            </xsd:sequence>
          </xsd:complexType>
        </xsd:element>
        <xsd:element name="teachingStaff">
          <xsd:complexType>
            <xsd:sequence>
              <xsd:element ref="person" minOccurs="0" maxOccurs="unbounded"/>
            </xsd:sequence>
          </xsd:complexType>
        </xsd:element>
      </xsd:sequence>
    </xsd:complexType>
  </xsd:element>
  <xsd:element name="person">
    <xsd:complexType>
      <xsd:sequence>
        <xsd:element name="name"/>
        <xsd:element ref="address"/>
        <xsd:element name="age" minOccurs="0"/>
      </xsd:sequence>
    </xsd:complexType>
  </xsd:element>
  <xsd:element name="address"/>
</xsd:schema>
"#;

/// The coarse schema: declares the root element only, so the whole
/// document stays in a single fragment.
pub const MEMBERS_WHOLE_DOCUMENT_SCHEMA: &str = r#"<xsd:schema xmlns:xsd="http://www.w3.org/2001/XMLSchema">
  <xsd:element name="XBaseMembers"/>
</xsd:schema>
"#;
